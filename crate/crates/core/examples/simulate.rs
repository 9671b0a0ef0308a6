//! Simulates a base alloy and shows that swapping the symmetric element pair
//! leaves the phase diagram unchanged.

use inverse_forge::simulator::{base_alloy, swap, SimulatorSpec, ELEMENTS};

fn main() -> inverse_forge::Result<()> {
    let spec = SimulatorSpec::generate(7, 8)?;
    let x = base_alloy("2024").expect("2024 is a base alloy");
    let d = spec.simulate(&x)?;
    println!("{} phases x {} temperatures", d.labels.len(), d.temperatures.len());
    for (p, label) in d.labels.iter().enumerate() {
        let row = &d.values[p * d.temperatures.len()..(p + 1) * d.temperatures.len()];
        let peak = row.iter().cloned().fold(0.0, f64::max);
        println!("{label:>10}: peak fraction {peak:.3}");
    }
    let (a, b) = spec.symmetric_pair;
    let twin = swap(&x, spec.symmetric_pair);
    let same = spec.simulate(&twin)?.values == d.values;
    println!("swapping {} and {} gives an identical diagram: {same}", ELEMENTS[a], ELEMENTS[b]);
    Ok(())
}
