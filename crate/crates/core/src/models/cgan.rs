//! Conditional GAN imputer.

use super::predictor::Predictor;
use super::cvae::MaskedBatch;
use crate::rng::Rng;
use crate::tensor::{Activation, Bound, Mlp, ParamStore, Tape, Var};
use crate::{Error, Result};

/// Discriminator outputs are clamped to `[D_CLAMP, 1 − D_CLAMP]` before logs.
pub const D_CLAMP: f64 = 1e-7;

/// Generator G_θ(z, v) → ĥ and discriminator D_η(h | v) ∈ (0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct CganImputer {
    pub generator: Mlp,
    pub generator_params: ParamStore,
    pub discriminator: Mlp,
    pub discriminator_params: ParamStore,
    pub latent_dim: usize,
    pub target_dim: usize,
}

/// Losses of one CGAN pass (sums over rows).
#[derive(Clone, Copy, Debug)]
pub struct CganTerms {
    /// `−[log D(h|v) + log(1 − D(G(z,v)|v))]`, minimized over η.
    pub disc_loss: Var,
    /// `−log D(G(z,v)|v)` (non-saturating), minimized over θ.
    pub gen_loss: Var,
    pub generated: Var,
    pub completed: Var,
    pub d_real: Var,
    pub d_fake: Var,
}

impl CganImputer {
    pub fn new(target_dim: usize, hidden: &[usize], latent_dim: usize, rng: &mut Rng) -> Self {
        let reversed: Vec<usize> = hidden.iter().rev().copied().collect();
        let mut generator_params = ParamStore::new("theta");
        let generator = Mlp::new(
            &mut generator_params,
            "generator",
            latent_dim + 2 * target_dim,
            &reversed,
            target_dim,
            Activation::Identity,
            rng,
        );
        let mut discriminator_params = ParamStore::new("eta");
        let discriminator = Mlp::new(
            &mut discriminator_params,
            "discriminator",
            3 * target_dim,
            hidden,
            1,
            Activation::Sigmoid,
            rng,
        );
        Self {
            generator,
            generator_params,
            discriminator,
            discriminator_params,
            latent_dim,
            target_dim,
        }
    }

    pub fn generate(&self, tape: &mut Tape, theta: &Bound, z: Var, batch: &MaskedBatch) -> Result<Var> {
        let input = tape.concat_cols(&[z, batch.v, batch.hidden])?;
        let g = self.generator.forward(tape, theta, input)?;
        tape.check_finite(g, "cgan generator")?;
        Ok(g)
    }

    /// `D(h | v)` on the hidden entries of `h` (others zeroed), clamped.
    pub fn discriminate(&self, tape: &mut Tape, eta: &Bound, h: Var, batch: &MaskedBatch) -> Result<Var> {
        let hm = tape.mul(h, batch.hidden)?;
        let input = tape.concat_cols(&[hm, batch.v, batch.hidden])?;
        let d = self.discriminator.forward(tape, eta, input)?;
        tape.check_finite(d, "cgan discriminator")?;
        Ok(tape.clamp(d, D_CLAMP, 1.0 - D_CLAMP))
    }

    /// Both adversarial losses for one batch. Bind θ or η frozen to restrict
    /// which side receives gradients.
    pub fn losses(&self, tape: &mut Tape, theta: &Bound, eta: &Bound, batch: &MaskedBatch, z: Var) -> Result<CganTerms> {
        let generated = self.generate(tape, theta, z, batch)?;
        let d_real = self.discriminate(tape, eta, batch.y, batch)?;
        let d_fake = self.discriminate(tape, eta, generated, batch)?;
        Ok(CganTerms {
            disc_loss: disc_loss(tape, d_real, d_fake)?,
            gen_loss: gen_loss(tape, d_fake),
            completed: batch.complete(tape, generated)?,
            generated,
            d_real,
            d_fake,
        })
    }
}

/// `−Σ [log D_real + log(1 − D_fake)]` over clamped discriminator outputs.
pub fn disc_loss(tape: &mut Tape, d_real: Var, d_fake: Var) -> Result<Var> {
    let dr = tape.clamp(d_real, D_CLAMP, 1.0 - D_CLAMP);
    let df = tape.clamp(d_fake, D_CLAMP, 1.0 - D_CLAMP);
    let lr = tape.log(dr);
    let nf = tape.neg(df);
    let one_minus = tape.add_scalar(nf, 1.0);
    let lf = tape.log(one_minus);
    let s = tape.add(lr, lf)?;
    let total = tape.sum(s);
    Ok(tape.neg(total))
}

/// Non-saturating generator loss `−Σ log D_fake`.
pub fn gen_loss(tape: &mut Tape, d_fake: Var) -> Var {
    let df = tape.clamp(d_fake, D_CLAMP, 1.0 - D_CLAMP);
    let l = tape.log(df);
    let s = tape.sum(l);
    tape.neg(s)
}

/// Terms of the hybrid CGAN objective.
#[derive(Clone, Copy, Debug)]
pub struct HybridCganTerms {
    pub cgan: CganTerms,
    pub log_px: Var,
    /// `−gen_loss + λ·log P(x | v, G(z, v))`, maximized over θ and γ.
    pub joint_objective: Var,
}

/// Adversarial losses plus the λ-weighted predictor term on `[v, G(z, v)]`.
/// The discriminator is updated separately on `disc_loss`.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_cgan_loss(
    tape: &mut Tape,
    imputer: &CganImputer,
    predictor: &Predictor,
    bounds: (&Bound, &Bound, &Bound),
    batch: &MaskedBatch,
    x: Var,
    z: Var,
    lambda: f64,
) -> Result<HybridCganTerms> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let (theta, eta, gamma) = bounds;
    let cgan = imputer.losses(tape, theta, eta, batch, z)?;
    let log_px = predictor.log_likelihood(tape, gamma, cgan.completed, x)?;
    let weighted = tape.scale(log_px, lambda);
    let neg_gen = tape.neg(cgan.gen_loss);
    let joint_objective = tape.add(neg_gen, weighted)?;
    Ok(HybridCganTerms {
        cgan,
        log_px,
        joint_objective,
    })
}
