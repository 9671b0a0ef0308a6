//! Builds a neighbourhood dataset around the base alloys, saves it and loads it back.

use inverse_forge::datagen::{build_dataset, BuildOptions, Dataset, Provenance};
use inverse_forge::simulator::SimulatorSpec;

fn main() -> inverse_forge::Result<()> {
    let spec = SimulatorSpec::generate(7, 8)?;
    let mut opts = BuildOptions::new(Provenance::Neighborhood, 400, 1);
    opts.symmetrize = true;
    let ds = build_dataset(&spec, &opts)?;
    println!("{} rows, {} target columns, {} phases", ds.len(), ds.width(), ds.phases());

    let dir = std::env::temp_dir().join("inverse-forge-build-dataset");
    ds.save(&dir)?;
    let back = Dataset::load(&dir)?;
    back.verify(&spec)?;
    println!("saved to {} and re-verified against the simulator", dir.display());
    let (train, test) = back.split(0);
    println!("fold 0: {} train rows, {} test rows", train.len(), test.len());
    Ok(())
}
