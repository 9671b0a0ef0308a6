//! Central finite-difference checks of every training loss against the tape's
//! reverse-mode gradients, on small networks.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{hybrid_cgan_loss, hybrid_cvae_loss, mdn_nll, CganImputer, CvaeImputer, MaskedBatch, MdnHead, Predictor};
use crate::rng::{stream, Rng};
use crate::tensor::{Bound, ParamStore, Tape, Tensor, Var};
use crate::Result;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Loss closure over one bound handle set per parameter store.
pub type LossFn<'a> = dyn Fn(&mut Tape, &[Bound]) -> Result<Var> + 'a;

/// Outcome of one loss check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub loss: String,
    pub entries: usize,
    /// Largest `|fd − analytic| / max(|fd|, |analytic|, 1e-4)` over all entries.
    pub max_relative: f64,
}

fn value(stores: &[ParamStore], f: &LossFn) -> Result<f64> {
    let mut tape = Tape::new();
    let bounds: Vec<Bound> = stores.iter().map(|s| s.bind_frozen(&mut tape)).collect();
    let l = f(&mut tape, &bounds)?;
    Ok(tape.scalar(l))
}

/// Analytic gradients of `f` for every store together with the worst relative
/// disagreement with central differences.
pub fn check_gradients(stores: &mut [ParamStore], f: &LossFn) -> Result<(Vec<Vec<f64>>, f64)> {
    let mut tape = Tape::new();
    let bounds: Vec<Bound> = stores.iter().map(|s| s.bind(&mut tape)).collect();
    let l = f(&mut tape, &bounds)?;
    tape.backward(l)?;
    let grads: Vec<Vec<f64>> = stores.iter().zip(&bounds).map(|(s, b)| s.flat_grad(&tape, b)).collect();
    let mut worst = 0.0f64;
    for si in 0..stores.len() {
        for i in 0..stores[si].len() {
            let orig = stores[si].values()[i];
            stores[si].values_mut()[i] = orig + FD_STEP;
            let up = value(stores, f)?;
            stores[si].values_mut()[i] = orig - FD_STEP;
            let down = value(stores, f)?;
            stores[si].values_mut()[i] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            let a = grads[si][i];
            let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-4);
            worst = if rel.is_nan() { f64::INFINITY } else { worst.max(rel) };
        }
    }
    Ok((grads, worst))
}

fn randn(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

struct Toy {
    rows: usize,
    width: usize,
    y: Vec<f64>,
    hidden: Vec<f64>,
    x: Vec<f64>,
    eps: Vec<f64>,
}

impl Toy {
    fn new(rng: &mut Rng, rows: usize, width: usize, latent: usize, xdim: usize) -> Self {
        let mut hidden: Vec<f64> = (0..rows * width).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        hidden[0] = 1.0;
        Self {
            rows,
            width,
            y: randn(rng, rows * width),
            hidden,
            x: randn(rng, rows * xdim),
            eps: randn(rng, rows * latent),
        }
    }
}

/// Moves every parameter off its initialization so zero biases do not sit on
/// ReLU kinks, where central differences disagree with the subgradient.
fn jitter(rng: &mut Rng, stores: &mut [ParamStore]) {
    for s in stores.iter_mut() {
        for v in s.values_mut() {
            let n: f64 = StandardNormal.sample(&mut *rng);
            *v += 0.1 * n;
        }
    }
}

fn record(loss: &str, rng: &mut Rng, stores: &mut [ParamStore], f: &LossFn) -> Result<GradientCheck> {
    jitter(rng, stores);
    let entries = stores.iter().map(ParamStore::len).sum();
    let (_, max_relative) = check_gradients(stores, f)?;
    Ok(GradientCheck {
        loss: loss.into(),
        entries,
        max_relative,
    })
}

/// Checks the MDN negative log-likelihood, the CVAE ELBO, the hybrid CVAE
/// objective (MDN and MLP predictors), the CGAN discriminator loss and the
/// hybrid CGAN objective. Networks have at most 8 units per layer.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradientCheck>> {
    let mut rng = stream(seed, "gradient-suite");
    let mut out = Vec::new();

    let mut gamma = ParamStore::new("gamma");
    let head = MdnHead::new(&mut gamma, 5, &[8], 3, 3, &mut rng);
    let mut cond = ParamStore::new("cond");
    let cid = cond.add("x", vec![2, 5], randn(&mut rng, 10));
    let x = randn(&mut rng, 6);
    let f = |t: &mut Tape, b: &[Bound]| {
        let xv = t.constant(Tensor::matrix(2, 3, x.clone())?);
        mdn_nll(t, &head, &b[0], b[1][cid], xv)
    };
    out.push(record("mdn_nll", &mut rng, &mut [gamma, cond], &f)?);

    let cvae = CvaeImputer::new(3, &[6, 4], 2, &mut rng);
    let d = Toy::new(&mut rng, 2, 3, 2, 2);
    let f = |t: &mut Tape, b: &[Bound]| {
        let batch = MaskedBatch::new(t, d.rows, d.width, &d.y, &d.hidden)?;
        let e = t.constant(Tensor::matrix(d.rows, 2, d.eps.clone())?);
        Ok(cvae.elbo(t, &b[0], &b[1], &batch, e)?.elbo)
    };
    out.push(record(
        "cvae_elbo",
        &mut rng,
        &mut [cvae.recognition_params.clone(), cvae.generation_params.clone()],
        &f,
    )?);

    for (name, predictor) in [
        ("hybrid_cvae_mdn", Predictor::mdn(3, &[4], 2, 2, &mut rng)),
        ("hybrid_cvae_mlp", Predictor::mlp(3, &[4], 2, &mut rng)),
    ] {
        let f = |t: &mut Tape, b: &[Bound]| {
            let batch = MaskedBatch::new(t, d.rows, d.width, &d.y, &d.hidden)?;
            let e = t.constant(Tensor::matrix(d.rows, 2, d.eps.clone())?);
            let x = t.constant(Tensor::matrix(d.rows, 2, d.x.clone())?);
            Ok(hybrid_cvae_loss(t, &cvae, &predictor, (&b[0], &b[1], &b[2]), &batch, x, 0.8, e)?.objective)
        };
        let mut stores = [
            cvae.recognition_params.clone(),
            cvae.generation_params.clone(),
            predictor.params.clone(),
        ];
        out.push(record(name, &mut rng, &mut stores, &f)?);
    }

    let cgan = CganImputer::new(3, &[5], 2, &mut rng);
    let predictor = Predictor::mdn(3, &[4], 2, 2, &mut rng);
    let mut stores = [
        cgan.generator_params.clone(),
        cgan.discriminator_params.clone(),
        predictor.params.clone(),
    ];
    let disc = |t: &mut Tape, b: &[Bound]| {
        let batch = MaskedBatch::new(t, d.rows, d.width, &d.y, &d.hidden)?;
        let z = t.constant(Tensor::matrix(d.rows, 2, d.eps.clone())?);
        Ok(cgan.losses(t, &b[0], &b[1], &batch, z)?.disc_loss)
    };
    out.push(record("cgan_discriminator", &mut rng, &mut stores, &disc)?);
    let joint = |t: &mut Tape, b: &[Bound]| {
        let batch = MaskedBatch::new(t, d.rows, d.width, &d.y, &d.hidden)?;
        let z = t.constant(Tensor::matrix(d.rows, 2, d.eps.clone())?);
        let x = t.constant(Tensor::matrix(d.rows, 2, d.x.clone())?);
        Ok(hybrid_cgan_loss(t, &cgan, &predictor, (&b[0], &b[1], &b[2]), &batch, x, z, 1.0)?.joint_objective)
    };
    out.push(record("hybrid_cgan", &mut rng, &mut stores, &joint)?);
    Ok(out)
}
