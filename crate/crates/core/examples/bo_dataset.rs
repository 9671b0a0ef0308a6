//! Drives dataset generation with the GP/EI engine and checks the auxiliary
//! element budget of every row.

use inverse_forge::datagen::{aux_totals, build_dataset, BuildOptions, Provenance};
use inverse_forge::simulator::SimulatorSpec;

fn main() -> inverse_forge::Result<()> {
    let spec = SimulatorSpec::generate(7, 8)?;
    let ds = build_dataset(&spec, &BuildOptions::new(Provenance::BoDriven, 60, 1))?;
    let totals = aux_totals(&ds);
    let worst = totals.iter().cloned().fold(0.0, f64::max);
    println!("{} BO-driven rows; largest auxiliary total {worst:.3}%", ds.len());
    Ok(())
}
