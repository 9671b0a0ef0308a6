//! Training loops for the seven model families, input/output scaling, and
//! checkpoint persistence.

mod checkpoint;

pub use checkpoint::{CHECKPOINT_VERSION, MANIFEST_FILE, WEIGHTS_FILE};
pub use crate::datagen::kfold_split;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, MaskMode};
use crate::models::{forest_fit, hybrid_cgan_loss, hybrid_cvae_loss, CganImputer, CvaeImputer, ForestConfig, ForestModel, MaskedBatch, Predictor};
use crate::rng::{stream, Rng};
use crate::simulator::{ELEMENTS, M};
use crate::tensor::{AdamState, ParamStore, Tape, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rf,
    Mlp,
    Mdn,
    CvaeMlp,
    CvaeMdn,
    CganMlp,
    CganMdn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImputerKind {
    None,
    Cvae,
    Cgan,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Rf,
        ModelKind::Mlp,
        ModelKind::Mdn,
        ModelKind::CvaeMlp,
        ModelKind::CvaeMdn,
        ModelKind::CganMlp,
        ModelKind::CganMdn,
    ];

    pub fn imputer(self) -> ImputerKind {
        match self {
            ModelKind::CvaeMlp | ModelKind::CvaeMdn => ImputerKind::Cvae,
            ModelKind::CganMlp | ModelKind::CganMdn => ImputerKind::Cgan,
            _ => ImputerKind::None,
        }
    }

    pub fn is_hybrid(self) -> bool {
        self.imputer() != ImputerKind::None
    }

    pub fn is_mixture(self) -> bool {
        matches!(self, ModelKind::Mdn | ModelKind::CvaeMdn | ModelKind::CganMdn)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "RF",
            ModelKind::Mlp => "MLP",
            ModelKind::Mdn => "MDN",
            ModelKind::CvaeMlp => "CVAE-MLP",
            ModelKind::CvaeMdn => "CVAE-MDN",
            ModelKind::CganMlp => "CGAN-MLP",
            ModelKind::CganMdn => "CGAN-MDN",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub hidden: Vec<usize>,
    /// Imputer hidden sizes; the predictor's when absent.
    pub imputer_hidden: Option<Vec<usize>>,
    pub latent_dim: usize,
    pub components: usize,
    pub lambda: f64,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Training-time masks pick a ratio from this list per example.
    pub mask_ratios: Vec<f64>,
    pub mask_mode: MaskMode,
    pub forest: ForestConfig,
    pub convergence_tol: f64,
    pub convergence_window: usize,
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model_kind: ModelKind::CvaeMdn,
            hidden: vec![500, 100, 50],
            imputer_hidden: None,
            latent_dim: 30,
            components: 5,
            lambda: 1.0,
            lr: 0.001,
            batch: 50,
            epochs: 200,
            seed: 0,
            mask_ratios: vec![0.5],
            mask_mode: MaskMode::Rows,
            forest: ForestConfig::default(),
            convergence_tol: 1e-5,
            convergence_window: 5,
            divergence_factor: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn new(model_kind: ModelKind) -> Self {
        Self {
            model_kind,
            ..Self::default()
        }
    }

    /// Small networks for single-CPU runs.
    pub fn desk(model_kind: ModelKind, seed: u64) -> Self {
        Self {
            model_kind,
            hidden: vec![64, 32],
            latent_dim: 8,
            epochs: 80,
            convergence_tol: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.hidden.iter().any(|h| *h == 0) || self.imputer_hidden.iter().flatten().any(|h| *h == 0) {
            return bad("hidden sizes must be positive");
        }
        if self.latent_dim == 0 || self.components == 0 || self.batch == 0 {
            return bad("latent_dim, components and batch must be positive");
        }
        if !(self.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.mask_ratios.is_empty() || self.mask_ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("mask_ratios must be a non-empty list of values in [0, 1]");
        }
        if self.forest.n_trees == 0 || self.forest.max_features == 0 {
            return bad("forest needs positive n_trees and max_features");
        }
        if !(self.convergence_tol >= 0.0) || self.convergence_window == 0 || !(self.divergence_factor > 0.0) {
            return bad("convergence_tol ≥ 0, convergence_window > 0 and divergence_factor > 0 required");
        }
        Ok(())
    }

    pub fn imputer_hidden(&self) -> &[usize] {
        self.imputer_hidden.as_deref().unwrap_or(&self.hidden)
    }
}

/// Per-feature affine scaling. Zero-variance features keep mean 0, std 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Smallest scale used for a varying feature. Phase fractions whose spread is
/// far below this would otherwise become large outliers after scaling.
pub const STD_FLOOR: f64 = 1e-2;

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        Self::fit_with_floor(rows, 0.0)
    }

    /// Like [`Standardizer::fit`], but scales never drop below `floor`.
    pub fn fit_with_floor(rows: &[&[f64]], floor: f64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Domain("cannot standardize zero rows".into()));
        }
        let w = rows[0].len();
        let mut mean = vec![0.0; w];
        for r in rows {
            if r.len() != w {
                return Err(Error::dim("standardizer row", &[w], &[r.len()]));
            }
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; w];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let mut std = Vec::with_capacity(w);
        for (j, s) in var.iter().enumerate() {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 * mean[j].abs().max(1.0) {
                std.push(sd.max(floor));
            } else {
                mean[j] = 0.0;
                std.push(1.0);
            }
        }
        Ok(Self { mean, std })
    }

    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| v * s + m).collect()
    }

    pub(crate) fn flat(&self) -> Vec<f64> {
        let mut v = self.mean.clone();
        v.extend(&self.std);
        v
    }

    pub(crate) fn from_flat(v: &[f64]) -> Self {
        let w = v.len() / 2;
        Self {
            mean: v[..w].to_vec(),
            std: v[w..].to_vec(),
        }
    }
}

/// Offset in `t = ln(x + OUTPUT_OFFSET)`.
pub const OUTPUT_OFFSET: f64 = 0.01;

pub fn to_log(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| (v + OUTPUT_OFFSET).ln()).collect()
}

pub fn from_log(t: &[f64]) -> Vec<f64> {
    t.iter().map(|v| v.exp() - OUTPUT_OFFSET).collect()
}

/// Input schema a checkpoint was trained on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub labels: Vec<String>,
    pub temperatures: Vec<f64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Schema {
    pub fn of(data: &Dataset) -> Self {
        Self {
            labels: data.labels.clone(),
            temperatures: data.temperatures.clone(),
            inputs: data.target_names(),
            outputs: ELEMENTS.iter().map(|e| e.to_string()).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.inputs.len()
    }

    /// Errors with the feature-name difference when `data` does not match.
    pub fn check(&self, data: &Dataset) -> Result<()> {
        let theirs = data.target_names();
        if theirs == self.inputs {
            return Ok(());
        }
        Err(Error::Schema {
            missing: self.inputs.iter().filter(|n| !theirs.contains(n)).cloned().collect(),
            unexpected: theirs.iter().filter(|n| !self.inputs.contains(n)).cloned().collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Imputer {
    None,
    Cvae(CvaeImputer),
    Cgan(CganImputer),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelBody {
    Forest(ForestModel),
    Net { predictor: Predictor, imputer: Imputer },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-example loss (negated objective) over the epoch.
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub kind: ModelKind,
    pub train_rows: usize,
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: String,
}

/// A trained model with everything needed to run and persist it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub schema: Schema,
    pub input_scaler: Standardizer,
    pub output_scaler: Standardizer,
    pub body: ModelBody,
    pub log: TrainingLog,
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        self.config.model_kind
    }

    /// Standardized inputs with hidden entries set to zero (the training mean).
    pub fn encode_inputs(&self, y: &[f64], hidden: &[bool]) -> Result<Vec<f64>> {
        let w = self.schema.width();
        if y.len() != w || hidden.len() != w {
            return Err(Error::dim("model input", &[w], &[y.len(), hidden.len()]));
        }
        Ok(self
            .input_scaler
            .apply(y)
            .into_iter()
            .zip(hidden)
            .map(|(v, h)| if *h { 0.0 } else { v })
            .collect())
    }

    /// Model output space (standardized log fractions) back to percent.
    pub fn decode_output(&self, t: &[f64]) -> Vec<f64> {
        from_log(&self.output_scaler.invert(t))
    }

    pub fn encode_output(&self, x: &[f64]) -> Vec<f64> {
        self.output_scaler.apply(&to_log(x))
    }
}

fn build_body(cfg: &TrainConfig, width: usize) -> ModelBody {
    let mut rng = stream(cfg.seed, "init");
    let predictor = if cfg.model_kind.is_mixture() {
        Predictor::mdn(width, &cfg.hidden, M, cfg.components, &mut rng)
    } else {
        Predictor::mlp(width, &cfg.hidden, M, &mut rng)
    };
    let imputer = match cfg.model_kind.imputer() {
        ImputerKind::None => Imputer::None,
        ImputerKind::Cvae => Imputer::Cvae(CvaeImputer::new(width, cfg.imputer_hidden(), cfg.latent_dim, &mut rng)),
        ImputerKind::Cgan => Imputer::Cgan(CganImputer::new(width, cfg.imputer_hidden(), cfg.latent_dim, &mut rng)),
    };
    ModelBody::Net { predictor, imputer }
}

/// Fresh, untrained checkpoint shell (used by loading).
pub(crate) fn skeleton(cfg: &TrainConfig, schema: Schema) -> ModelBody {
    if cfg.model_kind == ModelKind::Rf {
        ModelBody::Forest(ForestModel {
            trees: Vec::new(),
            n_features: schema.width(),
            n_outputs: M,
        })
    } else {
        build_body(cfg, schema.width())
    }
}

/// Trains on rows `train_rows` of `data`.
pub fn train(cfg: &TrainConfig, data: &Dataset, train_rows: &[usize]) -> Result<Checkpoint> {
    cfg.validate()?;
    data.validate()?;
    if train_rows.is_empty() {
        return Err(Error::Domain("no training rows".into()));
    }
    if let Some(r) = train_rows.iter().find(|r| **r >= data.len()) {
        return Err(Error::Domain(format!("training row {r} out of range for {} rows", data.len())));
    }
    let schema = Schema::of(data);
    let ys: Vec<&[f64]> = train_rows.iter().map(|r| data.targets[*r].as_slice()).collect();
    let input_scaler = Standardizer::fit_with_floor(&ys, STD_FLOOR)?;
    let ts: Vec<Vec<f64>> = train_rows.iter().map(|r| to_log(&data.compositions[*r].0)).collect();
    let t_refs: Vec<&[f64]> = ts.iter().map(Vec::as_slice).collect();
    let output_scaler = Standardizer::fit(&t_refs)?;
    let inputs: Vec<Vec<f64>> = ys.iter().map(|y| input_scaler.apply(y)).collect();
    let outputs: Vec<Vec<f64>> = ts.iter().map(|t| output_scaler.apply(t)).collect();

    let mut log = TrainingLog {
        kind: cfg.model_kind,
        train_rows: train_rows.len(),
        epochs: Vec::new(),
        stop_reason: "epoch cap".into(),
    };
    let body = if cfg.model_kind == ModelKind::Rf {
        let flat_in: Vec<f64> = inputs.concat();
        let flat_out: Vec<f64> = outputs.concat();
        let mut rng = stream(cfg.seed, "forest");
        let forest = forest_fit(&flat_in, &flat_out, schema.width(), M, &cfg.forest, &mut rng)?;
        log.stop_reason = "forest fitted".into();
        ModelBody::Forest(forest)
    } else {
        let mut body = build_body(cfg, schema.width());
        if let ModelBody::Net { predictor, imputer } = &mut body {
            let mut trainer = NetTrainer::new(cfg, predictor, imputer, &inputs, &outputs, data.phases(), data.temps());
            log.stop_reason = trainer.run(&mut log.epochs)?;
        }
        body
    };
    Ok(Checkpoint {
        config: cfg.clone(),
        schema,
        input_scaler,
        output_scaler,
        body,
        log,
    })
}

/// Trains on every fold except `test_fold`.
pub fn train_excluding_fold(cfg: &TrainConfig, data: &Dataset, test_fold: usize) -> Result<Checkpoint> {
    let (train_rows, _) = data.split(test_fold);
    train(cfg, data, &train_rows)
}

struct Optim {
    adam: AdamState,
}

impl Optim {
    fn new(store: &ParamStore, lr: f64) -> Self {
        Self {
            adam: AdamState::new(store.len(), lr),
        }
    }

    fn step(&mut self, store: &mut ParamStore, grad: &[f64]) -> Result<()> {
        self.adam.step(store.values_mut(), grad)
    }
}

struct NetTrainer<'a> {
    cfg: &'a TrainConfig,
    predictor: &'a mut Predictor,
    imputer: &'a mut Imputer,
    inputs: &'a [Vec<f64>],
    outputs: &'a [Vec<f64>],
    phases: usize,
    temps: usize,
    opt_gamma: Optim,
    opt_a: Option<Optim>,
    opt_b: Option<Optim>,
    rng_batches: Rng,
    rng_masks: Rng,
    rng_noise: Rng,
}

fn abort(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::Numeric { net, detail } => Error::TrainingAborted {
            epoch,
            batch,
            reason: format!("{net}: {detail}"),
        },
        Error::Contract(reason) | Error::NumericInput(reason) => Error::TrainingAborted { epoch, batch, reason },
        other => other,
    }
}

impl<'a> NetTrainer<'a> {
    fn new(
        cfg: &'a TrainConfig,
        predictor: &'a mut Predictor,
        imputer: &'a mut Imputer,
        inputs: &'a [Vec<f64>],
        outputs: &'a [Vec<f64>],
        phases: usize,
        temps: usize,
    ) -> Self {
        let opt_gamma = Optim::new(&predictor.params, cfg.lr);
        let (opt_a, opt_b) = match imputer {
            Imputer::None => (None, None),
            Imputer::Cvae(c) => (
                Some(Optim::new(&c.recognition_params, cfg.lr)),
                Some(Optim::new(&c.generation_params, cfg.lr)),
            ),
            Imputer::Cgan(g) => (
                Some(Optim::new(&g.generator_params, cfg.lr)),
                Some(Optim::new(&g.discriminator_params, cfg.lr)),
            ),
        };
        Self {
            cfg,
            predictor,
            imputer,
            inputs,
            outputs,
            phases,
            temps,
            opt_gamma,
            opt_a,
            opt_b,
            rng_batches: stream(cfg.seed, "batches"),
            rng_masks: stream(cfg.seed, "masks"),
            rng_noise: stream(cfg.seed, "noise"),
        }
    }

    fn run(&mut self, log: &mut Vec<EpochRecord>) -> Result<String> {
        let n = self.inputs.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        for epoch in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng_batches);
            let mut total = 0.0;
            for (bi, rows) in order.chunks(self.cfg.batch).enumerate() {
                let loss = self.step(rows).map_err(|e| abort(epoch, bi, e))?;
                if !loss.is_finite() {
                    return Err(Error::TrainingAborted {
                        epoch,
                        batch: bi,
                        reason: format!("non-finite loss {loss}"),
                    });
                }
                total += loss * rows.len() as f64;
            }
            let loss = total / n as f64;
            log.push(EpochRecord { epoch, loss });
            if loss > best + self.cfg.divergence_factor * best.abs().max(1.0) {
                return Err(Error::TrainingAborted {
                    epoch,
                    batch: n.div_ceil(self.cfg.batch) - 1,
                    reason: format!("diverged: epoch loss {loss} against best {best}"),
                });
            }
            best = best.min(loss);
            let w = self.cfg.convergence_window;
            if log.len() > w {
                let prev = log[log.len() - 1 - w].loss;
                if (loss - prev).abs() <= self.cfg.convergence_tol * prev.abs().max(1e-12) {
                    return Ok(format!("converged at epoch {epoch}"));
                }
            }
        }
        Ok("epoch cap".into())
    }

    fn batch_data(&mut self, rows: &[usize], masked: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.inputs[0].len();
        let mut y = Vec::with_capacity(rows.len() * d);
        let mut x = Vec::with_capacity(rows.len() * self.outputs[0].len());
        let mut hidden = vec![0.0; rows.len() * d];
        for (i, r) in rows.iter().enumerate() {
            y.extend(&self.inputs[*r]);
            x.extend(&self.outputs[*r]);
            if masked {
                let ratios = &self.cfg.mask_ratios;
                let ratio = ratios[self.rng_masks.random_range(0..ratios.len())];
                let mask = crate::datagen::Mask::random(self.cfg.mask_mode, ratio, self.phases, self.temps, &mut self.rng_masks)
                    .expect("validated ratio");
                for (j, h) in mask.hidden_flags(self.phases, self.temps).into_iter().enumerate() {
                    if h {
                        hidden[i * d + j] = 1.0;
                    }
                }
            }
        }
        (y, x, hidden)
    }

    fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(&mut self.rng_noise)).collect()
    }

    /// One optimizer step; returns the mean per-example loss.
    fn step(&mut self, rows: &[usize]) -> Result<f64> {
        let b = rows.len();
        let d = self.inputs[0].len();
        let m = self.outputs[0].len();
        let scale = 1.0 / b as f64;
        let masked = !matches!(self.imputer, Imputer::None);
        let (y, x, hidden) = self.batch_data(rows, masked);
        let latent = match &*self.imputer {
            Imputer::Cvae(c) => c.latent_dim,
            Imputer::Cgan(g) => g.latent_dim,
            Imputer::None => 0,
        };
        let noise = self.normals(b * latent);
        match &mut *self.imputer {
            Imputer::None => {
                let mut tape = Tape::new();
                let gamma = self.predictor.params.bind(&mut tape);
                let cond = tape.constant(Tensor::matrix(b, d, y)?);
                let xv = tape.constant(Tensor::matrix(b, m, x)?);
                let ll = self.predictor.log_likelihood(&mut tape, &gamma, cond, xv)?;
                let loss = tape.scale(ll, -scale);
                tape.backward(loss)?;
                let g = self.predictor.params.flat_grad(&tape, &gamma);
                self.opt_gamma.step(&mut self.predictor.params, &g)?;
                Ok(tape.scalar(loss))
            }
            Imputer::Cvae(cvae) => {
                let mut tape = Tape::new();
                let phi = cvae.recognition_params.bind(&mut tape);
                let theta = cvae.generation_params.bind(&mut tape);
                let gamma = self.predictor.params.bind(&mut tape);
                let batch = MaskedBatch::new(&mut tape, b, d, &y, &hidden)?;
                let eps = tape.constant(Tensor::matrix(b, latent, noise)?);
                let xv = tape.constant(Tensor::matrix(b, m, x)?);
                let terms = hybrid_cvae_loss(
                    &mut tape,
                    cvae,
                    self.predictor,
                    (&phi, &theta, &gamma),
                    &batch,
                    xv,
                    self.cfg.lambda,
                    eps,
                )?;
                let loss = tape.scale(terms.objective, -scale);
                tape.backward(loss)?;
                let gp = cvae.recognition_params.flat_grad(&tape, &phi);
                let gt = cvae.generation_params.flat_grad(&tape, &theta);
                let gg = self.predictor.params.flat_grad(&tape, &gamma);
                self.opt_a.as_mut().expect("cvae optimizer").step(&mut cvae.recognition_params, &gp)?;
                self.opt_b.as_mut().expect("cvae optimizer").step(&mut cvae.generation_params, &gt)?;
                self.opt_gamma.step(&mut self.predictor.params, &gg)?;
                Ok(tape.scalar(loss))
            }
            Imputer::Cgan(cgan) => {
                // Discriminator step on a frozen generator.
                {
                    let mut tape = Tape::new();
                    let theta = cgan.generator_params.bind_frozen(&mut tape);
                    let eta = cgan.discriminator_params.bind(&mut tape);
                    let batch = MaskedBatch::new(&mut tape, b, d, &y, &hidden)?;
                    let z = tape.constant(Tensor::matrix(b, latent, noise.clone())?);
                    let terms = cgan.losses(&mut tape, &theta, &eta, &batch, z)?;
                    let loss = tape.scale(terms.disc_loss, scale);
                    tape.backward(loss)?;
                    let ge = cgan.discriminator_params.flat_grad(&tape, &eta);
                    self.opt_b.as_mut().expect("cgan optimizer").step(&mut cgan.discriminator_params, &ge)?;
                }
                let mut tape = Tape::new();
                let theta = cgan.generator_params.bind(&mut tape);
                let eta = cgan.discriminator_params.bind_frozen(&mut tape);
                let gamma = self.predictor.params.bind(&mut tape);
                let batch = MaskedBatch::new(&mut tape, b, d, &y, &hidden)?;
                let z = tape.constant(Tensor::matrix(b, latent, noise)?);
                let xv = tape.constant(Tensor::matrix(b, m, x)?);
                let terms = hybrid_cgan_loss(
                    &mut tape,
                    cgan,
                    self.predictor,
                    (&theta, &eta, &gamma),
                    &batch,
                    xv,
                    z,
                    self.cfg.lambda,
                )?;
                let loss = tape.scale(terms.joint_objective, -scale);
                tape.backward(loss)?;
                let gt = cgan.generator_params.flat_grad(&tape, &theta);
                let gg = self.predictor.params.flat_grad(&tape, &gamma);
                self.opt_a.as_mut().expect("cgan optimizer").step(&mut cgan.generator_params, &gt)?;
                self.opt_gamma.step(&mut self.predictor.params, &gg)?;
                Ok(tape.scalar(loss))
            }
        }
    }
}
