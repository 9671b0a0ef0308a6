//! Trains a mixture density network and round-trips its checkpoint.

use inverse_forge::datagen::{build_dataset, BuildOptions, Provenance};
use inverse_forge::simulator::SimulatorSpec;
use inverse_forge::training::{train_excluding_fold, Checkpoint, ModelKind, TrainConfig};

fn main() -> inverse_forge::Result<()> {
    let spec = SimulatorSpec::generate(7, 8)?;
    let ds = build_dataset(&spec, &BuildOptions::new(Provenance::Neighborhood, 400, 1))?;
    let mut cfg = TrainConfig::desk(ModelKind::Mdn, 1);
    cfg.epochs = 20;
    let ck = train_excluding_fold(&cfg, &ds, 0)?;
    let first = ck.log.epochs.first().map_or(f64::NAN, |e| e.loss);
    let last = ck.log.epochs.last().map_or(f64::NAN, |e| e.loss);
    println!("{} epochs on {} rows: loss {first:.3} -> {last:.3} ({})", ck.log.epochs.len(), ck.log.train_rows, ck.log.stop_reason);

    let dir = std::env::temp_dir().join("inverse-forge-train-checkpoint");
    ck.save(&dir)?;
    let back = Checkpoint::load(&dir)?;
    println!("checkpoint reloads identically: {}", back == ck);
    Ok(())
}
