//! Closed-form densities shared by the predictors and imputers.

use serde::{Deserialize, Serialize};

use crate::tensor::log_sum_exp;
use crate::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Weighted isotropic Gaussians over an `M`-dimensional space.
///
/// A component variance of exactly zero marks a point mass (how plain MLP and
/// forest predictors are represented downstream); densities are undefined for
/// those.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureDensity {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl MixtureDensity {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let mix = Self {
            weights,
            means,
            variances,
        };
        mix.validate()?;
        if mix.variances.iter().any(|v| *v <= 0.0) {
            return Err(Error::Contract("mixture variances must be positive".into()));
        }
        Ok(mix)
    }

    /// Single component with zero variance.
    pub fn point_mass(mean: Vec<f64>) -> Self {
        Self {
            weights: vec![1.0],
            means: vec![mean],
            variances: vec![0.0],
        }
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn is_point_mass(&self) -> bool {
        self.variances.iter().any(|v| *v == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::Contract(format!(
                "mixture needs matching component counts (weights {k}, means {}, variances {})",
                self.means.len(),
                self.variances.len()
            )));
        }
        let m = self.means[0].len();
        if self.means.iter().any(|mu| mu.len() != m) {
            return Err(Error::Contract("mixture means differ in dimension".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Contract("mixture weights must be non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("mixture weights sum to {total}, not 1")));
        }
        if self.variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Contract("mixture variances must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Log-density of one component (no weight).
    pub fn component_log_density(&self, k: usize, x: &[f64]) -> f64 {
        gaussian_log_density(&self.means[k], self.variances[k], x)
    }
}

/// `log N(x; μ, I·σ²)`.
pub fn gaussian_log_density(mean: &[f64], variance: f64, x: &[f64]) -> f64 {
    let m = mean.len() as f64;
    let sq: f64 = mean.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * m * (LN_2PI + variance.ln()) - 0.5 * sq / variance
}

/// `log Σ_k α_k N(x; μ_k, Iσ_k²)` via log-sum-exp.
pub fn mdn_log_density(mix: &MixtureDensity, x: &[f64]) -> Result<f64> {
    mix.validate()?;
    if mix.is_point_mass() {
        return Err(Error::Contract("log-density of a point-mass mixture".into()));
    }
    if x.len() != mix.dim() {
        return Err(Error::dim("mixture log-density", &[mix.dim()], &[x.len()]));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("mixture evaluation point".into()));
    }
    let terms: Vec<f64> = (0..mix.components())
        .map(|k| log_weight(mix.weights[k]) + mix.component_log_density(k, x))
        .collect();
    Ok(log_sum_exp(&terms))
}

/// `ln α` with zero weights mapped to a large negative finite value.
pub fn log_weight(w: f64) -> f64 {
    if w > 0.0 {
        w.ln()
    } else {
        -1e30
    }
}

/// `KL(N(μ, diag σ²) ‖ N(0, I))`.
pub fn kl_diag_gaussian(mu: &[f64], sigma2: &[f64]) -> Result<f64> {
    if mu.len() != sigma2.len() {
        return Err(Error::dim("kl_diag_gaussian", &[mu.len()], &[sigma2.len()]));
    }
    if let Some(bad) = sigma2.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Domain(format!("variance must be positive, got {bad}")));
    }
    Ok(0.5
        * mu
            .iter()
            .zip(sigma2)
            .map(|(m, s)| s + m * m - 1.0 - s.ln())
            .sum::<f64>())
}

/// `z = μ + σ ⊙ ε`.
pub fn reparameterize(mu: &[f64], sigma: &[f64], epsilon: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != sigma.len() || mu.len() != epsilon.len() {
        return Err(Error::dim(
            "reparameterize",
            &[mu.len(), mu.len()],
            &[sigma.len(), epsilon.len()],
        ));
    }
    Ok(mu
        .iter()
        .zip(sigma)
        .zip(epsilon)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn standard_normal_at_mode() {
        let mix = MixtureDensity::new(vec![1.0], vec![vec![0.0]], vec![1.0]).unwrap();
        let v = mdn_log_density(&mix, &[0.0]).unwrap();
        assert!((v - (-0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-12);
        assert!((v + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn symmetric_pair_collapses() {
        let mix = MixtureDensity::new(vec![0.5, 0.5], vec![vec![-1.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        let v = mdn_log_density(&mix, &[0.0]).unwrap();
        let expected = ((-0.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v + 1.418939).abs() < 1e-6);
    }

    fn naive(mix: &MixtureDensity, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for k in 0..mix.components() {
            let var = mix.variances[k];
            let m = x.len() as i32;
            let norm = (2.0 * std::f64::consts::PI * var).powi(m).sqrt();
            let sq: f64 = x.iter().zip(&mix.means[k]).map(|(a, b)| (a - b).powi(2)).sum();
            total += mix.weights[k] * (-sq / (2.0 * var)).exp() / norm;
        }
        total.ln()
    }

    #[test]
    fn matches_naive_summation() {
        let mut rng = crate::rng::stream(3, "mix-naive");
        for _ in 0..50 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let weights = raw.iter().map(|w| w / s).collect();
            let means = (0..3)
                .map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let variances = (0..3).map(|_| rng.random_range(0.3..2.0)).collect();
            let mix = MixtureDensity::new(weights, means, variances).unwrap();
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = mdn_log_density(&mix, &x).unwrap();
            assert!((a - naive(&mix, &x)).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_unnormalized_weights() {
        let mix = MixtureDensity {
            weights: vec![0.5, 0.6],
            means: vec![vec![0.0], vec![1.0]],
            variances: vec![1.0, 1.0],
        };
        assert!(matches!(mdn_log_density(&mix, &[0.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_diag_gaussian(&[0.0], &[1.0]).unwrap(), 0.0);
        assert!((kl_diag_gaussian(&[1.0], &[1.0]).unwrap() - 0.5).abs() < 1e-15);
        let v = kl_diag_gaussian(&[0.0], &[2.0]).unwrap();
        assert!((v - 0.5 * (1.0 - 2f64.ln())).abs() < 1e-15);
        assert!((v - 0.153426).abs() < 1e-6);
        assert!(matches!(kl_diag_gaussian(&[0.0], &[0.0]), Err(Error::Domain(_))));
        assert!(kl_diag_gaussian(&[0.0], &[-1.0]).is_err());
    }

    #[test]
    fn reparameterize_examples() {
        assert_eq!(reparameterize(&[0.3, -1.0], &[2.0, 5.0], &[0.0, 0.0]).unwrap(), vec![0.3, -1.0]);
        assert_eq!(reparameterize(&[0.5], &[2.0], &[1.0]).unwrap(), vec![2.5]);
        assert!(matches!(reparameterize(&[0.5], &[2.0, 1.0], &[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn reparameterized_moments_match() {
        let mut rng = crate::rng::stream(5, "reparam-mc");
        let (mu, sigma) = (1.5, 0.7);
        let n = 100_000;
        let zs: Vec<f64> = (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                reparameterize(&[mu], &[sigma], &[e]).unwrap()[0]
            })
            .collect();
        let mean = zs.iter().sum::<f64>() / n as f64;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(((mean - mu) / mu).abs() < 0.01);
        assert!(((var.sqrt() - sigma) / sigma).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn kl_is_non_negative(mu in prop::collection::vec(-3.0f64..3.0, 1..6), s in prop::collection::vec(0.05f64..5.0, 6)) {
            let s = &s[..mu.len()];
            prop_assert!(kl_diag_gaussian(&mu, s).unwrap() >= 0.0);
        }

        #[test]
        fn log_density_is_permutation_invariant(
            w in prop::collection::vec(0.05f64..1.0, 3),
            m in prop::collection::vec(-2.0f64..2.0, 3),
            v in prop::collection::vec(0.2f64..2.0, 3),
            x in -2.0f64..2.0,
        ) {
            let s: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|a| a / s).collect();
            let a = MixtureDensity::new(w.clone(), m.iter().map(|x| vec![*x]).collect(), v.clone()).unwrap();
            let perm = [2usize, 0, 1];
            let b = MixtureDensity::new(
                perm.iter().map(|i| w[*i]).collect(),
                perm.iter().map(|i| vec![m[*i]]).collect(),
                perm.iter().map(|i| v[*i]).collect(),
            ).unwrap();
            let (da, db) = (mdn_log_density(&a, &[x]).unwrap(), mdn_log_density(&b, &[x]).unwrap());
            prop_assert!((da - db).abs() < 1e-12);
        }
    }
}
