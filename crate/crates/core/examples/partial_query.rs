//! Hides half of a target diagram and asks a CVAE-MDN hybrid for designs.

use inverse_forge::datagen::{build_dataset, BuildOptions, Provenance};
use inverse_forge::evaluation::{composition_errors, eval_mask, EvalSettings};
use inverse_forge::inference::{predict_designs, response, InferenceConfig};
use inverse_forge::simulator::SimulatorSpec;
use inverse_forge::training::{train_excluding_fold, ModelKind, TrainConfig};

fn main() -> inverse_forge::Result<()> {
    let spec = SimulatorSpec::generate(7, 8)?;
    let ds = build_dataset(&spec, &BuildOptions::new(Provenance::Neighborhood, 400, 1))?;
    let mut cfg = TrainConfig::desk(ModelKind::CvaeMdn, 1);
    cfg.epochs = 20;
    let ck = train_excluding_fold(&cfg, &ds, 0)?;

    let (_, test) = ds.split(0);
    let r = test[0];
    let hidden = eval_mask(&ds, r, &EvalSettings::with_ratio(0.5, 1))?;
    println!("{} of {} cells hidden", hidden.iter().filter(|h| **h).count(), hidden.len());
    let cands = predict_designs(&ck, &ds.targets[r], &hidden, &InferenceConfig::default())?;
    for (c, item) in cands.iter().zip(response(&cands)).take(3) {
        let e = composition_errors(&ds.compositions[r].0, &c.composition.0)?;
        println!("log density {:.2}, relative error {:.3}", item.log_density, e.relative.unwrap_or(f64::NAN));
    }
    println!("{} candidates in total", cands.len());
    Ok(())
}
