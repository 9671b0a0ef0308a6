//! Re-simulates predicted designs and scores them on the observed cells.

use inverse_forge::datagen::{build_dataset, BuildOptions, Provenance};
use inverse_forge::evaluation::{closed_loop_eval, EvalSettings};
use inverse_forge::simulator::SimulatorSpec;
use inverse_forge::training::{train_excluding_fold, ModelKind, TrainConfig};

fn main() -> inverse_forge::Result<()> {
    let spec = SimulatorSpec::generate(7, 8)?;
    let ds = build_dataset(&spec, &BuildOptions::new(Provenance::Neighborhood, 400, 1))?;
    let mut cfg = TrainConfig::desk(ModelKind::CvaeMdn, 1);
    cfg.epochs = 20;
    let ck = train_excluding_fold(&cfg, &ds, 0)?;
    let (_, test) = ds.split(0);
    let rows: Vec<usize> = test.iter().take(10).copied().collect();
    let report = closed_loop_eval(&spec, &ck, &ds, &rows, &EvalSettings::with_ratio(0.5, 1))?;
    for (label, e) in report.labels.iter().zip(&report.per_phase) {
        match e {
            Some(e) => println!("{label:>10}: {:.2}%", 100.0 * e),
            None => println!("{label:>10}: no observed mass"),
        }
    }
    println!("average over {} queries: {:.2}%", report.queries, 100.0 * report.average);
    Ok(())
}
