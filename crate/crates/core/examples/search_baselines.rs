//! Random search, a genetic algorithm and BO chasing one target diagram.

use inverse_forge::evaluation::{search_baseline, SearchMethod};
use inverse_forge::simulator::{base_alloy, SimulatorSpec};

fn main() -> inverse_forge::Result<()> {
    let spec = SimulatorSpec::generate(7, 8)?;
    let target = spec.simulate(&base_alloy("7075").expect("7075 is a base alloy"))?.values;
    let hidden = vec![false; target.len()];
    for method in [SearchMethod::Random, SearchMethod::Ga, SearchMethod::Bo] {
        let trace = search_baseline(method, &spec, &target, &hidden, 40, 1)?;
        println!("{method:?}: best error {:.2}% after {} calls", 100.0 * trace.best_error().unwrap_or(f64::NAN), trace.steps.len());
    }
    Ok(())
}
