//! Error of a cell-masked CVAE-MDN as more of the target is hidden.

use inverse_forge::datagen::{build_dataset, BuildOptions, MaskMode, Provenance};
use inverse_forge::evaluation::{missing_ratio_sweep, EvalSettings, SWEEP_RATIOS};
use inverse_forge::simulator::SimulatorSpec;
use inverse_forge::training::{train_excluding_fold, ModelKind, TrainConfig};

fn main() -> inverse_forge::Result<()> {
    let spec = SimulatorSpec::generate(7, 8)?;
    let ds = build_dataset(&spec, &BuildOptions::new(Provenance::Neighborhood, 400, 1))?;
    let mut cfg = TrainConfig::desk(ModelKind::CvaeMdn, 1);
    cfg.epochs = 20;
    cfg.mask_mode = MaskMode::Cells;
    cfg.mask_ratios = SWEEP_RATIOS.to_vec();
    let ck = train_excluding_fold(&cfg, &ds, 0)?;
    let mut settings = EvalSettings::with_ratio(0.5, 1);
    settings.mask_mode = MaskMode::Cells;
    let curve = missing_ratio_sweep(&ck, &ds, 0, &SWEEP_RATIOS, &settings)?;
    for p in &curve.points {
        println!("hidden {:.1}: min {:.2}%, mean {:.2}%", p.mask_ratio, 100.0 * p.relative_min, 100.0 * p.relative_mean);
    }
    Ok(())
}
