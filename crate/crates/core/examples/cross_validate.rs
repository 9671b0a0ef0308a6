//! Cross-validates the plain predictors and the forest baseline on full targets.

use inverse_forge::datagen::{build_dataset, BuildOptions, Provenance};
use inverse_forge::evaluation::{cross_validate, EvalSettings};
use inverse_forge::simulator::SimulatorSpec;
use inverse_forge::training::{ModelKind, TrainConfig};

fn main() -> inverse_forge::Result<()> {
    let spec = SimulatorSpec::generate(7, 8)?;
    let ds = build_dataset(&spec, &BuildOptions::new(Provenance::Neighborhood, 400, 1))?;
    let settings = EvalSettings::with_ratio(0.0, 1);
    for kind in [ModelKind::Mdn, ModelKind::Mlp, ModelKind::Rf] {
        let mut cfg = TrainConfig::desk(kind, 1);
        cfg.epochs = 20;
        let r = cross_validate(&cfg, &ds, &settings, &[0, 1])?;
        println!("{:>4}: min relative error {:.2}% ± {:.2}%", r.method, 100.0 * r.relative.min.mean, 100.0 * r.relative.min.std);
    }
    Ok(())
}
