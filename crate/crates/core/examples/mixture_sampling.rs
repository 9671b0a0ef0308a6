//! Gumbel-max selection picks mixture components in proportion to their weights.

use inverse_forge::inference::gumbel_select;
use inverse_forge::models::MixtureDensity;
use inverse_forge::rng::stream;
use rand::Rng as _;

fn main() -> inverse_forge::Result<()> {
    let mix = MixtureDensity::new(vec![0.6, 0.3, 0.1], vec![vec![-1.0], vec![0.0], vec![1.0]], vec![0.1; 3])?;
    let mut rng = stream(1, "mixture-sampling");
    let mut counts = [0usize; 3];
    let draws = 20_000;
    for _ in 0..draws {
        let noise: Vec<f64> = (0..3).map(|_| -(-rng.random::<f64>().max(1e-300).ln()).ln()).collect();
        counts[gumbel_select(&mix, &noise)?] += 1;
    }
    for (k, c) in counts.iter().enumerate() {
        println!("component {k}: weight {:.2}, chosen {:.3}", mix.weights[k], *c as f64 / draws as f64);
    }
    Ok(())
}
