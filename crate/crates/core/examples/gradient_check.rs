//! Finite-difference check of every training loss.

fn main() -> inverse_forge::Result<()> {
    for c in inverse_forge::models::gradient_suite(1)? {
        println!("{:>20}: {:>4} entries, worst relative error {:.1e}", c.loss, c.entries, c.max_relative);
    }
    Ok(())
}
