use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::rng::{stream, Rng};
use crate::tensor::{Activation, Bound, Mlp, ParamId, ParamStore, Tape, Tensor, Var};
use crate::Result;

const TOL: f64 = 1e-4;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

type Loss<'a> = dyn Fn(&mut Tape, &[Bound]) -> Result<Var> + 'a;

fn fd_check(label: &str, stores: &mut [ParamStore], f: &Loss) -> Vec<Vec<f64>> {
    let (grads, worst) = super::fdcheck::check_gradients(stores, f).unwrap();
    assert!(worst < TOL, "{label}: worst relative gradient error {worst}");
    grads
}

#[test]
fn public_suite_passes() {
    let suite = super::gradient_suite(5).unwrap();
    assert_eq!(suite.len(), 6);
    for c in suite {
        assert!(c.max_relative < TOL, "{c:?}");
    }
}

fn randn(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn input_store(name: &str, rows: usize, cols: usize, data: Vec<f64>) -> (ParamStore, ParamId) {
    let mut s = ParamStore::new(name);
    let id = s.add("x", vec![rows, cols], data);
    (s, id)
}

fn zero(store: &mut ParamStore) {
    store.values_mut().iter_mut().for_each(|v| *v = 0.0);
}

fn hidden_flags(rng: &mut Rng, n: usize) -> Vec<f64> {
    let mut h: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    h[0] = 1.0;
    h
}

#[test]
fn two_layer_net_gradients_match_finite_differences() {
    let mut rng = stream(21, "gradcheck-mlp");
    let mut params = ParamStore::new("net");
    let net = Mlp::new(&mut params, "net", 4, &[6], 3, Activation::Identity, &mut rng);
    let proj = randn(&mut rng, 3 * 3);
    let (input, id) = input_store("input", 3, 4, randn(&mut rng, 12));
    let mut stores = vec![params, input];
    let f = |t: &mut Tape, b: &[Bound]| {
        let x = b[1][id];
        let y = net.forward(t, &b[0], x)?;
        let p = t.constant(Tensor::matrix(3, 3, proj.clone())?);
        let m = t.mul(y, p)?;
        Ok(t.sum(m))
    };
    fd_check("mlp", &mut stores, &f);
}

#[test]
fn mdn_nll_gradient_matches_finite_differences() {
    let mut rng = stream(22, "gradcheck-mdn");
    let mut gamma = ParamStore::new("gamma");
    let head = MdnHead::new(&mut gamma, 5, &[8], 3, 3, &mut rng);
    let (cond, id) = input_store("cond", 2, 5, randn(&mut rng, 10));
    let x = randn(&mut rng, 6);
    let mut stores = vec![gamma, cond];
    let f = |t: &mut Tape, b: &[Bound]| {
        let xv = t.constant(Tensor::matrix(2, 3, x.clone())?);
        mdn_nll(t, &head, &b[0], b[1][id], xv)
    };
    let grads = fd_check("mdn_nll", &mut stores, &f);
    assert!(grads[1].iter().any(|g| g.abs() > 1e-6));
}

#[test]
fn mdn_nll_with_forced_unit_gaussian_at_x() {
    let mut rng = stream(23, "mdn-forced");
    let mut gamma = ParamStore::new("gamma");
    let head = MdnHead::new(&mut gamma, 4, &[], 1, 1, &mut rng);
    zero(&mut gamma);
    gamma.get_mut(head.mean_net.output_layer().bias)[0] = 0.7;
    let mut t = Tape::new();
    let b = gamma.bind(&mut t);
    let c = t.constant(Tensor::matrix(1, 4, randn(&mut rng, 4)).unwrap());
    let x = t.constant(Tensor::matrix(1, 1, vec![0.7]).unwrap());
    let nll = mdn_nll(&mut t, &head, &b, c, x).unwrap();
    assert!((t.scalar(nll) - HALF_LN_2PI).abs() < 1e-12);
}

#[test]
fn mdn_nll_one_hot_weights_reduce_to_single_gaussian() {
    let mut rng = stream(24, "mdn-onehot");
    let mut gamma = ParamStore::new("gamma");
    let head = MdnHead::new(&mut gamma, 3, &[], 2, 2, &mut rng);
    zero(&mut gamma);
    gamma.get_mut(head.weight_net.output_layer().bias).copy_from_slice(&[60.0, -60.0]);
    gamma.get_mut(head.mean_net.output_layer().bias).copy_from_slice(&[1.0, -2.0, 5.0, 5.0]);
    gamma.get_mut(head.logvar_net.output_layer().bias).copy_from_slice(&[0.4, 0.0]);
    let mut t = Tape::new();
    let b = gamma.bind(&mut t);
    let c = t.constant(Tensor::matrix(1, 3, randn(&mut rng, 3)).unwrap());
    let xs = [0.5, -1.0];
    let x = t.constant(Tensor::matrix(1, 2, xs.to_vec()).unwrap());
    let nll = mdn_nll(&mut t, &head, &b, c, x).unwrap();
    let single = -gaussian_log_density(&[1.0, -2.0], 0.4f64.exp(), &xs);
    assert!((t.scalar(nll) - single).abs() < 1e-10);
}

struct Toy {
    rows: usize,
    width: usize,
    y: Vec<f64>,
    hidden: Vec<f64>,
    x: Vec<f64>,
    eps: Vec<f64>,
}

fn toy(rng: &mut Rng, rows: usize, width: usize, latent: usize, xdim: usize) -> Toy {
    Toy {
        rows,
        width,
        y: randn(rng, rows * width),
        hidden: hidden_flags(rng, rows * width),
        x: randn(rng, rows * xdim),
        eps: randn(rng, rows * latent),
    }
}

#[test]
fn elbo_gradient_matches_finite_differences() {
    let mut rng = stream(25, "gradcheck-elbo");
    let cvae = CvaeImputer::new(3, &[6, 4], 2, &mut rng);
    let d = toy(&mut rng, 2, 3, 2, 1);
    let mut stores = vec![cvae.recognition_params.clone(), cvae.generation_params.clone()];
    let f = |t: &mut Tape, b: &[Bound]| {
        let batch = MaskedBatch::new(t, d.rows, d.width, &d.y, &d.hidden)?;
        let e = t.constant(Tensor::matrix(d.rows, 2, d.eps.clone())?);
        Ok(cvae.elbo(t, &b[0], &b[1], &batch, e)?.elbo)
    };
    fd_check("elbo", &mut stores, &f);
}

#[test]
fn elbo_with_prior_recognition_is_decoder_log_likelihood() {
    let mut rng = stream(26, "elbo-prior");
    let mut cvae = CvaeImputer::new(4, &[5], 3, &mut rng);
    zero(&mut cvae.recognition_params);
    let d = toy(&mut rng, 3, 4, 3, 1);
    let mut t = Tape::new();
    let phi = cvae.recognition_params.bind(&mut t);
    let theta = cvae.generation_params.bind(&mut t);
    let batch = MaskedBatch::new(&mut t, d.rows, d.width, &d.y, &d.hidden).unwrap();
    let e = t.constant(Tensor::matrix(d.rows, 3, d.eps.clone()).unwrap());
    let terms = cvae.elbo(&mut t, &phi, &theta, &batch, e).unwrap();
    assert_eq!(t.scalar(terms.kl), 0.0);
    assert_eq!(t.scalar(terms.elbo), t.scalar(terms.log_likelihood));
}

#[test]
fn elbo_with_exact_unit_decoder() {
    let mut rng = stream(27, "elbo-decoder");
    let mut cvae = CvaeImputer::new(3, &[4], 2, &mut rng);
    let h = [0.3, -1.2, 2.0];
    zero(&mut cvae.generation_params);
    cvae.generation_params.get_mut(cvae.generation.mean.bias).copy_from_slice(&h);
    let hidden = [1.0, 1.0, 0.0];
    let mut t = Tape::new();
    let phi = cvae.recognition_params.bind(&mut t);
    let theta = cvae.generation_params.bind(&mut t);
    let batch = MaskedBatch::new(&mut t, 1, 3, &h, &hidden).unwrap();
    let e = t.constant(Tensor::matrix(1, 2, vec![0.4, -0.9]).unwrap());
    let terms = cvae.elbo(&mut t, &phi, &theta, &batch, e).unwrap();
    assert!((t.scalar(terms.log_likelihood) + 2.0 * HALF_LN_2PI).abs() < 1e-12);
}

fn perfect_predictor(inputs: usize, x: f64, rng: &mut Rng) -> Predictor {
    let mut p = Predictor::mdn(inputs, &[], 1, 1, rng);
    zero(&mut p.params);
    if let PredictorNet::Mdn(head) = &p.net {
        let id = head.mean_net.output_layer().bias;
        p.params.get_mut(id)[0] = x;
    }
    p
}

#[test]
fn hybrid_cvae_limits() {
    let mut rng = stream(28, "hybrid-cvae-limits");
    let cvae = CvaeImputer::new(3, &[4], 2, &mut rng);
    let predictor = perfect_predictor(3, 1.25, &mut rng);
    let d = toy(&mut rng, 1, 3, 2, 1);
    let run = |lambda: f64| {
        let mut t = Tape::new();
        let phi = cvae.recognition_params.bind(&mut t);
        let theta = cvae.generation_params.bind(&mut t);
        let gamma = predictor.params.bind(&mut t);
        let batch = MaskedBatch::new(&mut t, 1, 3, &d.y, &d.hidden).unwrap();
        let e = t.constant(Tensor::matrix(1, 2, d.eps.clone()).unwrap());
        let x = t.constant(Tensor::matrix(1, 1, vec![1.25]).unwrap());
        let terms = hybrid_cvae_loss(&mut t, &cvae, &predictor, (&phi, &theta, &gamma), &batch, x, lambda, e).unwrap();
        let alone = cvae.elbo(&mut t, &phi, &theta, &batch, e).unwrap();
        assert_eq!(t.scalar(terms.cvae.elbo).to_bits(), t.scalar(alone.elbo).to_bits());
        (t.scalar(terms.objective), t.scalar(alone.elbo))
    };
    let (tiny, elbo) = run(1e-12);
    assert!((tiny - elbo).abs() < 1e-10);
    let (one, elbo) = run(1.0);
    assert!((one - (elbo - HALF_LN_2PI)).abs() < 1e-12);
    for bad in [0.0, -1.0, f64::NAN] {
        let mut t = Tape::new();
        let phi = cvae.recognition_params.bind(&mut t);
        let theta = cvae.generation_params.bind(&mut t);
        let gamma = predictor.params.bind(&mut t);
        let batch = MaskedBatch::new(&mut t, 1, 3, &d.y, &d.hidden).unwrap();
        let e = t.constant(Tensor::matrix(1, 2, d.eps.clone()).unwrap());
        let x = t.constant(Tensor::matrix(1, 1, vec![1.25]).unwrap());
        let r = hybrid_cvae_loss(&mut t, &cvae, &predictor, (&phi, &theta, &gamma), &batch, x, bad, e);
        assert!(matches!(r, Err(crate::Error::Config(_))));
    }
}

#[test]
fn hybrid_cvae_gradient_matches_finite_differences() {
    let mut rng = stream(29, "gradcheck-hybrid-cvae");
    let cvae = CvaeImputer::new(3, &[5], 2, &mut rng);
    let predictor = Predictor::mdn(3, &[4], 2, 2, &mut rng);
    let d = toy(&mut rng, 2, 3, 2, 2);
    let mut stores = vec![
        cvae.recognition_params.clone(),
        cvae.generation_params.clone(),
        predictor.params.clone(),
    ];
    let f = |t: &mut Tape, b: &[Bound]| {
        let batch = MaskedBatch::new(t, d.rows, d.width, &d.y, &d.hidden)?;
        let e = t.constant(Tensor::matrix(d.rows, 2, d.eps.clone())?);
        let x = t.constant(Tensor::matrix(d.rows, 2, d.x.clone())?);
        Ok(hybrid_cvae_loss(t, &cvae, &predictor, (&b[0], &b[1], &b[2]), &batch, x, 0.8, e)?.objective)
    };
    fd_check("hybrid cvae", &mut stores, &f);
}

#[test]
fn hybrid_cvae_with_mlp_predictor_gradient() {
    let mut rng = stream(30, "gradcheck-hybrid-cvae-mlp");
    let cvae = CvaeImputer::new(3, &[4], 2, &mut rng);
    let predictor = Predictor::mlp(3, &[4], 2, &mut rng);
    let d = toy(&mut rng, 2, 3, 2, 2);
    let mut stores = vec![
        cvae.recognition_params.clone(),
        cvae.generation_params.clone(),
        predictor.params.clone(),
    ];
    let f = |t: &mut Tape, b: &[Bound]| {
        let batch = MaskedBatch::new(t, d.rows, d.width, &d.y, &d.hidden)?;
        let e = t.constant(Tensor::matrix(d.rows, 2, d.eps.clone())?);
        let x = t.constant(Tensor::matrix(d.rows, 2, d.x.clone())?);
        Ok(hybrid_cvae_loss(t, &cvae, &predictor, (&b[0], &b[1], &b[2]), &batch, x, 1.0, e)?.objective)
    };
    fd_check("hybrid cvae mlp", &mut stores, &f);
}

#[test]
fn cgan_losses_at_half() {
    let mut rng = stream(31, "cgan-half");
    let mut cgan = CganImputer::new(3, &[4], 2, &mut rng);
    zero(&mut cgan.discriminator_params);
    let d = toy(&mut rng, 1, 3, 2, 1);
    let mut t = Tape::new();
    let theta = cgan.generator_params.bind(&mut t);
    let eta = cgan.discriminator_params.bind(&mut t);
    let batch = MaskedBatch::new(&mut t, 1, 3, &d.y, &d.hidden).unwrap();
    let z = t.constant(Tensor::matrix(1, 2, d.eps.clone()).unwrap());
    let terms = cgan.losses(&mut t, &theta, &eta, &batch, z).unwrap();
    assert!((t.scalar(terms.disc_loss) - 1.386_294_361_119_890_6).abs() < 1e-12);
    assert!((t.scalar(terms.gen_loss) - 0.693_147_180_559_945_3).abs() < 1e-12);
}

#[test]
fn perfect_discriminator_loss_is_clamped_near_zero() {
    let mut t = Tape::new();
    let real = t.constant(Tensor::matrix(1, 1, vec![1.0]).unwrap());
    let fake = t.constant(Tensor::matrix(1, 1, vec![0.0]).unwrap());
    let l = disc_loss(&mut t, real, fake).unwrap();
    let v = t.scalar(l);
    assert!(v.is_finite() && v > 0.0 && v < 1e-6, "{v}");
    let g = gen_loss(&mut t, fake);
    assert!((t.scalar(g) + D_CLAMP.ln()).abs() < 1e-9);
}

#[test]
fn cgan_gradients_match_finite_differences() {
    let mut rng = stream(32, "gradcheck-cgan");
    let cgan = CganImputer::new(3, &[5], 2, &mut rng);
    let predictor = Predictor::mdn(3, &[4], 2, 2, &mut rng);
    let d = toy(&mut rng, 2, 3, 2, 2);
    let mut stores = vec![
        cgan.generator_params.clone(),
        cgan.discriminator_params.clone(),
        predictor.params.clone(),
    ];
    let disc = |t: &mut Tape, b: &[Bound]| {
        let batch = MaskedBatch::new(t, d.rows, d.width, &d.y, &d.hidden)?;
        let z = t.constant(Tensor::matrix(d.rows, 2, d.eps.clone())?);
        Ok(cgan.losses(t, &b[0], &b[1], &batch, z)?.disc_loss)
    };
    fd_check("cgan disc", &mut stores, &disc);
    let joint = |t: &mut Tape, b: &[Bound]| {
        let batch = MaskedBatch::new(t, d.rows, d.width, &d.y, &d.hidden)?;
        let z = t.constant(Tensor::matrix(d.rows, 2, d.eps.clone())?);
        let x = t.constant(Tensor::matrix(d.rows, 2, d.x.clone())?);
        Ok(hybrid_cgan_loss(t, &cgan, &predictor, (&b[0], &b[1], &b[2]), &batch, x, z, 1.0)?.joint_objective)
    };
    fd_check("hybrid cgan", &mut stores, &joint);
    let lambda_term = |t: &mut Tape, b: &[Bound]| {
        let batch = MaskedBatch::new(t, d.rows, d.width, &d.y, &d.hidden)?;
        let z = t.constant(Tensor::matrix(d.rows, 2, d.eps.clone())?);
        let x = t.constant(Tensor::matrix(d.rows, 2, d.x.clone())?);
        Ok(hybrid_cgan_loss(t, &cgan, &predictor, (&b[0], &b[1], &b[2]), &batch, x, z, 1.0)?.log_px)
    };
    let grads = fd_check("cgan lambda term", &mut stores, &lambda_term);
    assert!(grads[0].iter().any(|g| g.abs() > 1e-6), "predictor term must reach the generator");
}

#[test]
fn frozen_generator_and_perfect_predictor_reproduce_mdn_nll() {
    let mut rng = stream(33, "cgan-compose");
    let cgan = CganImputer::new(2, &[4], 2, &mut rng);
    let predictor = Predictor::mdn(2, &[3], 1, 2, &mut rng);
    let d = toy(&mut rng, 1, 2, 2, 1);
    let mut t = Tape::new();
    let theta = cgan.generator_params.bind_frozen(&mut t);
    let eta = cgan.discriminator_params.bind(&mut t);
    let gamma = predictor.params.bind(&mut t);
    let batch = MaskedBatch::new(&mut t, 1, 2, &d.y, &d.hidden).unwrap();
    let z = t.constant(Tensor::matrix(1, 2, d.eps.clone()).unwrap());
    let x = t.constant(Tensor::matrix(1, 1, d.x.clone()).unwrap());
    let terms = hybrid_cgan_loss(&mut t, &cgan, &predictor, (&theta, &eta, &gamma), &batch, x, z, 1.0).unwrap();
    let PredictorNet::Mdn(head) = &predictor.net else { unreachable!() };
    let nll = mdn_nll(&mut t, head, &gamma, terms.cgan.completed, x).unwrap();
    assert_eq!(t.scalar(terms.log_px), -t.scalar(nll));
    let gen_only = -t.scalar(terms.cgan.gen_loss);
    let tiny = {
        let mut t2 = Tape::new();
        let theta = cgan.generator_params.bind(&mut t2);
        let eta = cgan.discriminator_params.bind(&mut t2);
        let gamma = predictor.params.bind(&mut t2);
        let batch = MaskedBatch::new(&mut t2, 1, 2, &d.y, &d.hidden).unwrap();
        let z = t2.constant(Tensor::matrix(1, 2, d.eps.clone()).unwrap());
        let x = t2.constant(Tensor::matrix(1, 1, d.x.clone()).unwrap());
        let r = hybrid_cgan_loss(&mut t2, &cgan, &predictor, (&theta, &eta, &gamma), &batch, x, z, 1e-12).unwrap();
        t2.scalar(r.joint_objective)
    };
    assert!((tiny - gen_only).abs() < 1e-9);
}

#[test]
fn elbo_lower_bounds_monte_carlo_marginal() {
    // 1-D toy: z ~ N(0,1), h | z ~ N(a z + b, s²); exact marginal N(b, a² + s²).
    let mut rng = stream(34, "elbo-bound");
    let mut cvae = CvaeImputer::new(1, &[], 1, &mut rng);
    let (a, b, log_s2) = (0.8, 0.3, -0.5);
    zero(&mut cvae.generation_params);
    let g = &cvae.generation;
    cvae.generation_params.get_mut(g.mean.weights)[0] = a;
    cvae.generation_params.get_mut(g.mean.bias)[0] = b;
    cvae.generation_params.get_mut(g.logvar.bias)[0] = log_s2;
    let h = 1.1;
    let n = 100_000;
    let eps = randn(&mut rng, n);
    let mut t = Tape::new();
    let phi = cvae.recognition_params.bind_frozen(&mut t);
    let theta = cvae.generation_params.bind_frozen(&mut t);
    let batch = MaskedBatch::new(&mut t, n, 1, &vec![h; n], &vec![1.0; n]).unwrap();
    let e = t.constant(Tensor::matrix(n, 1, eps).unwrap());
    let terms = cvae.elbo(&mut t, &phi, &theta, &batch, e).unwrap();
    let elbo = t.scalar(terms.elbo) / n as f64;

    let zs = randn(&mut rng, n);
    let s2 = f64::exp(log_s2);
    let lps: Vec<f64> = zs.iter().map(|z| gaussian_log_density(&[a * z + b], s2, &[h])).collect();
    let mc = crate::tensor::log_sum_exp(&lps) - (n as f64).ln();
    let exact = gaussian_log_density(&[b], a * a + s2, &[h]);
    assert!((mc - exact).abs() < 0.01, "mc {mc} exact {exact}");
    assert!(elbo <= mc + 0.01, "elbo {elbo} mc {mc}");
}
