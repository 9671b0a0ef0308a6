//! Prediction pipeline: draw latents from the prior, impute hidden targets at
//! the generator mode, evaluate the predictor, and pull candidate designs out
//! of each mixture by Gumbel sampling. Nothing here calls the simulator.

use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::models::{gaussian_log_density, log_weight, MaskedBatch, MixtureDensity, PredictorNet};
use crate::rng::stream;
use crate::simulator::{Composition, ELEMENTS};
use crate::tensor::{log_sum_exp, Tape, Tensor};
use crate::training::{Checkpoint, Imputer, ModelBody};
use crate::{Error, Result};

/// Duplicate threshold (max-norm, percent units) for candidate designs.
pub const DEDUP_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    /// Latent draws per query.
    pub n: usize,
    pub seed: u64,
    pub modes_per_mixture: usize,
    /// Lets plain models answer partial queries by filling hidden entries
    /// with training means instead of failing.
    pub mean_fill_plain: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            n: 20,
            seed: 0,
            modes_per_mixture: 1,
            mean_fill_plain: false,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.modes_per_mixture == 0 {
            return Err(Error::Config("n and modes_per_mixture must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub composition: Composition,
    /// Log-density of the averaged conditional `(1/N) Σ_i P(x | v, h̄_i)` at
    /// the candidate, in model output space.
    pub log_density: f64,
    pub z_index: usize,
    pub component_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub z: Vec<f64>,
    /// Imputed hidden entries in phase-fraction units, in input order.
    pub imputed: Vec<f64>,
    /// Conditional over standardized log compositions.
    pub mixture: MixtureDensity,
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub records: Vec<PredictionRecord>,
    /// `(record, position)` for every candidate, flattened.
    pub sources: Vec<(usize, usize)>,
}

impl PredictionSet {
    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.sources.iter().map(|(r, c)| &self.records[*r].candidates[*c])
    }
}

/// `argmax_k (ln α_k + noise_k)`.
pub fn gumbel_select(mix: &MixtureDensity, noise: &[f64]) -> Result<usize> {
    if noise.len() != mix.components() {
        return Err(Error::dim("gumbel noise", &[mix.components()], &[noise.len()]));
    }
    if mix.weights.iter().all(|w| *w <= 0.0) {
        return Err(Error::Contract("every mixture weight is zero".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (k, (w, g)) in mix.weights.iter().zip(noise).enumerate() {
        let s = log_weight(*w) + g;
        if s > best.1 {
            best = (k, s);
        }
    }
    Ok(best.0)
}

fn hidden_count(hidden: &[bool]) -> usize {
    hidden.iter().filter(|h| **h).count()
}

/// Completed standardized conditions `v + H ⊙ fill`, one row per latent.
fn complete_rows(ck: &Checkpoint, v: &[f64], hidden: &[bool], zs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = v.len();
    let rows = zs.len();
    let ModelBody::Net { imputer, .. } = &ck.body else {
        return Ok(v.repeat(rows));
    };
    if hidden_count(hidden) == 0 || matches!(imputer, Imputer::None) {
        return Ok(v.repeat(rows));
    }
    let flags: Vec<f64> = hidden.iter().map(|h| if *h { 1.0 } else { 0.0 }).collect();
    let mut tape = Tape::new();
    let batch = MaskedBatch::new(&mut tape, rows, d, &v.repeat(rows), &flags.repeat(rows))?;
    let latent = zs[0].len();
    let z = tape.constant(Tensor::matrix(rows, latent, zs.concat())?);
    let fill = match imputer {
        Imputer::Cvae(c) => {
            let theta = c.generation_params.bind_frozen(&mut tape);
            c.generate(&mut tape, &theta, z, &batch)?.0
        }
        Imputer::Cgan(g) => {
            let theta = g.generator_params.bind_frozen(&mut tape);
            g.generate(&mut tape, &theta, z, &batch)?
        }
        Imputer::None => unreachable!(),
    };
    let completed = batch.complete(&mut tape, fill)?;
    tape.check_finite(completed, "imputer")?;
    Ok(tape.value(completed).to_vec())
}

fn check_query(ck: &Checkpoint, y: &[f64], hidden: &[bool]) -> Result<Vec<f64>> {
    let w = ck.schema.width();
    if y.len() != w || hidden.len() != w {
        return Err(Error::dim("query", &[w], &[y.len(), hidden.len()]));
    }
    if y.iter().zip(hidden).any(|(v, h)| !h && !v.is_finite()) {
        return Err(Error::NumericInput("observed query value".into()));
    }
    let y: Vec<f64> = y.iter().zip(hidden).map(|(v, h)| if *h { 0.0 } else { *v }).collect();
    ck.encode_inputs(&y, hidden)
}

/// Hidden entries `h̄ = μ(v, z)` in phase-fraction units. Empty when nothing
/// is hidden; plain models have no imputer and fail with a contract error.
pub fn impute(ck: &Checkpoint, y: &[f64], hidden: &[bool], z: &[f64]) -> Result<Vec<f64>> {
    let v = check_query(ck, y, hidden)?;
    if hidden_count(hidden) == 0 {
        return Ok(Vec::new());
    }
    if !ck.kind().is_hybrid() {
        return Err(Error::Contract(format!("{} has no imputer", ck.kind().name())));
    }
    if z.len() != ck.config.latent_dim {
        return Err(Error::dim("latent", &[ck.config.latent_dim], &[z.len()]));
    }
    let completed = complete_rows(ck, &v, hidden, &[z.to_vec()])?;
    Ok(hidden_raw(ck, &completed, hidden))
}

fn hidden_raw(ck: &Checkpoint, completed: &[f64], hidden: &[bool]) -> Vec<f64> {
    ck.input_scaler
        .invert(completed)
        .into_iter()
        .zip(hidden)
        .filter(|(_, h)| **h)
        .map(|(v, _)| v)
        .collect()
}

fn mixtures(ck: &Checkpoint, conds: &[f64]) -> Result<Vec<MixtureDensity>> {
    match &ck.body {
        ModelBody::Forest(f) => conds
            .chunks(ck.schema.width())
            .map(|c| Ok(MixtureDensity::point_mass(f.predict(c)?)))
            .collect(),
        ModelBody::Net { predictor, .. } => predictor.distributions(conds),
    }
}

/// Point masses are scored as unit-variance Gaussians.
fn averaged_log_density(mixes: &[MixtureDensity], t: &[f64]) -> f64 {
    let terms: Vec<f64> = mixes
        .iter()
        .flat_map(|m| {
            (0..m.components()).map(move |k| {
                let var = if m.variances[k] > 0.0 { m.variances[k] } else { 1.0 };
                log_weight(m.weights[k]) + gaussian_log_density(&m.means[k], var, t)
            })
        })
        .collect();
    log_sum_exp(&terms) - (mixes.len() as f64).ln()
}

/// Runs the conditional model for one query. `y` holds raw phase fractions
/// (hidden entries ignored); `hidden` flags entries to impute.
pub fn predict_conditional(ck: &Checkpoint, y: &[f64], hidden: &[bool], cfg: &InferenceConfig) -> Result<PredictionSet> {
    cfg.validate()?;
    let v = check_query(ck, y, hidden)?;
    let n_hidden = hidden_count(hidden);
    let hybrid = ck.kind().is_hybrid();
    if !hybrid && n_hidden > 0 && !cfg.mean_fill_plain {
        return Err(Error::Contract(format!(
            "{} cannot take a partial query ({n_hidden} hidden entries); use a hybrid CVAE or CGAN checkpoint",
            ck.kind().name()
        )));
    }
    let latent = if hybrid { ck.config.latent_dim } else { 0 };
    let mut zrng = stream(cfg.seed, "latent");
    let zs: Vec<Vec<f64>> = (0..cfg.n)
        .map(|_| (0..latent).map(|_| StandardNormal.sample(&mut zrng)).collect())
        .collect();

    let mixes = if hybrid {
        let conds = complete_rows(ck, &v, hidden, &zs)?;
        let mixes = mixtures(ck, &conds)?;
        let d = v.len();
        (conds.chunks(d).map(|c| hidden_raw(ck, c, hidden)).collect::<Vec<_>>(), mixes)
    } else {
        let one = mixtures(ck, &v)?.remove(0);
        let imputed = hidden_raw(ck, &v, hidden);
        (vec![imputed; cfg.n], vec![one; cfg.n])
    };
    let (imputed, mixes) = mixes;

    let gumbel = Gumbel::new(0.0, 1.0).expect("unit Gumbel");
    let mut grng = stream(cfg.seed, "gumbel");
    let mut records = Vec::with_capacity(cfg.n);
    let mut sources = Vec::new();
    for (i, (mix, (z, imputed))) in mixes.iter().zip(zs.into_iter().zip(imputed)).enumerate() {
        let mut candidates = Vec::with_capacity(cfg.modes_per_mixture);
        for _ in 0..cfg.modes_per_mixture {
            let noise: Vec<f64> = (0..mix.components()).map(|_| gumbel.sample(&mut grng)).collect();
            let k = gumbel_select(mix, &noise)?;
            let raw = ck.decode_output(&mix.means[k]);
            let composition = Composition::normalized(&raw)?;
            let log_density = averaged_log_density(&mixes, &ck.encode_output(&composition.0));
            sources.push((i, candidates.len()));
            candidates.push(Candidate {
                composition,
                log_density,
                z_index: i,
                component_index: k,
            });
        }
        records.push(PredictionRecord {
            z,
            imputed,
            mixture: mix.clone(),
            candidates,
        });
    }
    Ok(PredictionSet { records, sources })
}

/// Ranked, deduplicated candidate designs (highest log-density first).
pub fn predict_designs(ck: &Checkpoint, y: &[f64], hidden: &[bool], cfg: &InferenceConfig) -> Result<Vec<Candidate>> {
    let set = predict_conditional(ck, y, hidden, cfg)?;
    let mut out: Vec<Candidate> = Vec::new();
    for c in set.candidates() {
        let dup = out.iter().any(|o| {
            o.composition
                .0
                .iter()
                .zip(&c.composition.0)
                .all(|(a, b)| (a - b).abs() <= DEDUP_TOLERANCE)
        });
        if !dup {
            out.push(c.clone());
        }
    }
    out.sort_by(|a, b| {
        b.log_density
            .total_cmp(&a.log_density)
            .then(a.z_index.cmp(&b.z_index))
            .then(a.component_index.cmp(&b.component_index))
    });
    Ok(out)
}

/// Whether the checkpoint's predictor yields point masses only.
pub fn is_point_predictor(ck: &Checkpoint) -> bool {
    match &ck.body {
        ModelBody::Forest(_) => true,
        ModelBody::Net { predictor, .. } => matches!(predictor.net, PredictorNet::Mlp(_)),
    }
}

/// Query file: observed cells keyed `"<phase>@<temperature>"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub observed: BTreeMap<String, f64>,
}

impl Query {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
    }

    /// Builds a query from a full target row and hidden flags.
    pub fn from_row(names: &[String], y: &[f64], hidden: &[bool]) -> Self {
        Self {
            observed: names
                .iter()
                .zip(y)
                .zip(hidden)
                .filter(|(_, h)| !**h)
                .map(|((n, v), _)| (n.clone(), *v))
                .collect(),
        }
    }

    /// Input vector and hidden flags in the checkpoint's feature order.
    pub fn resolve(&self, ck: &Checkpoint) -> Result<(Vec<f64>, Vec<bool>)> {
        self.resolve_names(&ck.schema.inputs)
    }

    /// Input vector and hidden flags in the order of `names`.
    pub fn resolve_names(&self, names: &[String]) -> Result<(Vec<f64>, Vec<bool>)> {
        let unexpected: Vec<String> = self.observed.keys().filter(|k| !names.contains(k)).cloned().collect();
        if !unexpected.is_empty() {
            return Err(Error::Schema {
                missing: Vec::new(),
                unexpected,
            });
        }
        let mut y = vec![0.0; names.len()];
        let mut hidden = vec![true; names.len()];
        for (j, n) in names.iter().enumerate() {
            if let Some(v) = self.observed.get(n) {
                if !v.is_finite() {
                    return Err(Error::NumericInput(format!("query value for {n}")));
                }
                y[j] = *v;
                hidden[j] = false;
            }
        }
        Ok((y, hidden))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseItem {
    pub composition: BTreeMap<String, f64>,
    pub log_density: f64,
    pub z_index: usize,
    pub component_index: usize,
}

pub fn response(candidates: &[Candidate]) -> Vec<ResponseItem> {
    candidates
        .iter()
        .map(|c| ResponseItem {
            composition: ELEMENTS.iter().map(|e| e.to_string()).zip(c.composition.0).collect(),
            log_density: c.log_density,
            z_index: c.z_index,
            component_index: c.component_index,
        })
        .collect()
}

#[cfg(test)]
mod tests;
