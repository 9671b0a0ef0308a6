//! Conditional VAE imputer for the unspecified target part.

use super::predictor::Predictor;
use super::mixture::LN_2PI;
use crate::rng::Rng;
use crate::tensor::{Activation, Bound, DenseLayer, Mlp, ParamStore, Tape, Tensor, Var};
use crate::{Error, Result};

/// Clamp on every Gaussian log-variance produced by the CVAE networks.
pub const LOGVAR_CLAMP: f64 = 10.0;

/// ReLU trunk followed by separate mean and log-variance heads.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianNet {
    pub trunk: Option<Mlp>,
    pub mean: DenseLayer,
    pub logvar: DenseLayer,
}

impl GaussianNet {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, hidden: &[usize], outputs: usize, rng: &mut Rng) -> Self {
        let (trunk, width) = match hidden.split_last() {
            Some((last, rest)) => (
                Some(Mlp::new(store, &format!("{name}.trunk"), inputs, rest, *last, Activation::Relu, rng)),
                *last,
            ),
            None => (None, inputs),
        };
        let mean = DenseLayer::new(store, &format!("{name}.mean"), width, outputs, Activation::Identity, rng);
        let logvar = DenseLayer::new(store, &format!("{name}.logvar"), width, outputs, Activation::Identity, rng);
        Self { trunk, mean, logvar }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var, net: &str) -> Result<(Var, Var)> {
        let h = match &self.trunk {
            Some(t) => t.forward(tape, bound, x)?,
            None => x,
        };
        let mean = self.mean.forward(tape, bound, h)?;
        tape.check_finite(mean, net)?;
        let raw = self.logvar.forward(tape, bound, h)?;
        tape.check_finite(raw, net)?;
        Ok((mean, tape.clamp(raw, -LOGVAR_CLAMP, LOGVAR_CLAMP)))
    }
}

/// A batch of standardized targets split by a per-entry hidden flag.
#[derive(Clone, Copy, Debug)]
pub struct MaskedBatch {
    /// `[b × D]` full target (hidden entries are only read by training losses).
    pub y: Var,
    /// `[b × D]` observed part with hidden entries zeroed.
    pub v: Var,
    /// `[b × D]` 1.0 where the entry is hidden.
    pub hidden: Var,
    pub rows: usize,
}

impl MaskedBatch {
    pub fn new(tape: &mut Tape, rows: usize, width: usize, y: &[f64], hidden: &[f64]) -> Result<Self> {
        if y.len() != rows * width || hidden.len() != rows * width {
            return Err(Error::dim("masked batch", &[rows * width], &[y.len(), hidden.len()]));
        }
        let v: Vec<f64> = y.iter().zip(hidden).map(|(a, h)| if *h > 0.5 { 0.0 } else { *a }).collect();
        Ok(Self {
            y: tape.constant(Tensor::matrix(rows, width, y.to_vec())?),
            v: tape.constant(Tensor::matrix(rows, width, v)?),
            hidden: tape.constant(Tensor::matrix(rows, width, hidden.to_vec())?),
            rows,
        })
    }

    /// `v + hidden ⊙ fill`: observed entries kept, hidden ones taken from `fill`.
    pub fn complete(&self, tape: &mut Tape, fill: Var) -> Result<Var> {
        let masked = tape.mul(self.hidden, fill)?;
        tape.add(self.v, masked)
    }
}

/// Recognition network Q_φ(z | h, v) and generation network P_θ(h | z, v).
#[derive(Clone, Debug, PartialEq)]
pub struct CvaeImputer {
    pub recognition: GaussianNet,
    pub recognition_params: ParamStore,
    pub generation: GaussianNet,
    pub generation_params: ParamStore,
    pub latent_dim: usize,
    pub target_dim: usize,
}

/// Tape handles produced by [`CvaeImputer::elbo`]. Scalars are sums over rows.
#[derive(Clone, Copy, Debug)]
pub struct CvaeTerms {
    pub z_mean: Var,
    pub z_logvar: Var,
    pub z: Var,
    pub kl: Var,
    pub h_mean: Var,
    pub h_logvar: Var,
    pub log_likelihood: Var,
    pub elbo: Var,
    /// `v` with hidden entries replaced by the decoder mode `μ(v, z)`.
    pub completed: Var,
}

impl CvaeImputer {
    pub fn new(target_dim: usize, hidden: &[usize], latent_dim: usize, rng: &mut Rng) -> Self {
        let mut recognition_params = ParamStore::new("phi");
        let recognition = GaussianNet::new(&mut recognition_params, "recognition", 2 * target_dim, hidden, latent_dim, rng);
        let reversed: Vec<usize> = hidden.iter().rev().copied().collect();
        let mut generation_params = ParamStore::new("theta");
        let generation = GaussianNet::new(
            &mut generation_params,
            "generation",
            latent_dim + 2 * target_dim,
            &reversed,
            target_dim,
            rng,
        );
        Self {
            recognition,
            recognition_params,
            generation,
            generation_params,
            latent_dim,
            target_dim,
        }
    }

    /// Decoder mean and log-variance of `h` given `(z, v)`.
    pub fn generate(&self, tape: &mut Tape, theta: &Bound, z: Var, batch: &MaskedBatch) -> Result<(Var, Var)> {
        let input = tape.concat_cols(&[z, batch.v, batch.hidden])?;
        self.generation.forward(tape, theta, input, "cvae generation net")
    }

    /// Lower bound on `log P(h | v)` with `z = μ_φ + σ_φ ⊙ ε`; `epsilon` is
    /// `[b × latent]`.
    pub fn elbo(&self, tape: &mut Tape, phi: &Bound, theta: &Bound, batch: &MaskedBatch, epsilon: Var) -> Result<CvaeTerms> {
        let rec_in = tape.concat_cols(&[batch.y, batch.hidden])?;
        let (z_mean, z_logvar) = self.recognition.forward(tape, phi, rec_in, "cvae recognition net")?;

        let half = tape.scale(z_logvar, 0.5);
        let sigma = tape.exp(half);
        let noise = tape.mul(sigma, epsilon)?;
        let z = tape.add(z_mean, noise)?;

        // KL(Q ‖ N(0, I)) = ½ Σ (σ² + μ² − 1 − log σ²)
        let var = tape.exp(z_logvar);
        let mu2 = tape.square(z_mean);
        let a = tape.add(var, mu2)?;
        let b = tape.sub(a, z_logvar)?;
        let b = tape.add_scalar(b, -1.0);
        let s = tape.sum(b);
        let kl = tape.scale(s, 0.5);

        let (h_mean, h_logvar) = self.generate(tape, theta, z, batch)?;
        // Diagonal Gaussian log-density over hidden entries only.
        let d = tape.sub(batch.y, h_mean)?;
        let d2 = tape.square(d);
        let neg = tape.neg(h_logvar);
        let prec = tape.exp(neg);
        let q = tape.mul(d2, prec)?;
        let per = tape.add(q, h_logvar)?;
        let per = tape.add_scalar(per, LN_2PI);
        let masked = tape.mul(per, batch.hidden)?;
        let s = tape.sum(masked);
        let log_likelihood = tape.scale(s, -0.5);

        let elbo = tape.sub(log_likelihood, kl)?;
        let completed = batch.complete(tape, h_mean)?;
        Ok(CvaeTerms {
            z_mean,
            z_logvar,
            z,
            kl,
            h_mean,
            h_logvar,
            log_likelihood,
            elbo,
            completed,
        })
    }
}

/// Terms of the hybrid CVAE objective (all sums over rows).
#[derive(Clone, Copy, Debug)]
pub struct HybridCvaeTerms {
    pub cvae: CvaeTerms,
    pub log_px: Var,
    /// `ELBO + λ·log P(x | v, h̄)`, to be maximized.
    pub objective: Var,
}

/// ELBO plus λ times the predictor log-likelihood of `x` conditioned on the
/// completed target `[v, h̄]`, `h̄ = μ(v, z)`. Gradients reach φ, θ and γ.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_cvae_loss(
    tape: &mut Tape,
    imputer: &CvaeImputer,
    predictor: &Predictor,
    bounds: (&Bound, &Bound, &Bound),
    batch: &MaskedBatch,
    x: Var,
    lambda: f64,
    epsilon: Var,
) -> Result<HybridCvaeTerms> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let (phi, theta, gamma) = bounds;
    let cvae = imputer.elbo(tape, phi, theta, batch, epsilon)?;
    let log_px = predictor.log_likelihood(tape, gamma, cvae.completed, x)?;
    let weighted = tape.scale(log_px, lambda);
    let objective = tape.add(cvae.elbo, weighted)?;
    Ok(HybridCvaeTerms { cvae, log_px, objective })
}
