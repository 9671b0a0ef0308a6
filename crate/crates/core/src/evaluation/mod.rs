//! Error metrics, cross-validated model evaluation, missing-ratio sweeps,
//! closed-loop re-simulation, search baselines, PCA and report files.

mod pca;
mod report;
mod search;

pub use pca::{pca_project, Pca};
pub use report::{emit_report, svg_line_plot, svg_scatter_plot, PcaReport, ResultFile, Series, REPORT_MANIFEST};
pub use search::{ga_search, search_baseline, GaConfig, SearchMethod, SearchStep, SearchTrace};

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Mask, MaskMode};
use crate::inference::{predict_designs, InferenceConfig};
use crate::rng::{derive_seed, stream};
use crate::simulator::{Composition, SimulatorSpec};
use crate::training::{train_excluding_fold, Checkpoint, TrainConfig};
use crate::{Error, Result};

/// Per-instance errors: mean `|x̂ − x| / x` over nonzero true elements and
/// mean `x̂` over zero true elements (`None` when there are none).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceErrors {
    pub relative: Option<f64>,
    pub absolute: Option<f64>,
    pub nonzero: usize,
    pub zero: usize,
}

pub fn composition_errors(x_true: &[f64], x_pred: &[f64]) -> Result<InstanceErrors> {
    if x_true.len() != x_pred.len() {
        return Err(Error::dim("composition errors", &[x_true.len()], &[x_pred.len()]));
    }
    if x_true.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain("true composition has negative or non-finite entries".into()));
    }
    let (mut rel, mut abs, mut nz, mut z) = (0.0, 0.0, 0, 0);
    for (t, p) in x_true.iter().zip(x_pred) {
        if *t > 0.0 {
            rel += (p - t).abs() / t;
            nz += 1;
        } else {
            abs += p;
            z += 1;
        }
    }
    Ok(InstanceErrors {
        relative: (nz > 0).then(|| rel / nz as f64),
        absolute: (z > 0).then(|| abs / z as f64),
        nonzero: nz,
        zero: z,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Triple {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    fn average(items: &[Triple]) -> Option<Self> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        Some(Self {
            min: items.iter().map(|t| t.min).sum::<f64>() / n,
            mean: items.iter().map(|t| t.mean).sum::<f64>() / n,
            max: items.iter().map(|t| t.max).sum::<f64>() / n,
        })
    }
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Errors of one row's candidate set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowErrors {
    pub row: usize,
    pub candidates: usize,
    pub relative: Triple,
    pub absolute: Option<Triple>,
}

pub fn row_errors(row: usize, x_true: &[f64], candidates: &[Composition]) -> Result<RowErrors> {
    let mut rel = Vec::with_capacity(candidates.len());
    let mut abs = Vec::with_capacity(candidates.len());
    for c in candidates {
        let e = composition_errors(x_true, &c.0)?;
        rel.extend(e.relative);
        abs.extend(e.absolute);
    }
    Ok(RowErrors {
        row,
        candidates: candidates.len(),
        relative: Triple::of(&rel).ok_or_else(|| Error::Domain("no candidates to score".into()))?,
        absolute: Triple::of(&abs),
    })
}

/// Row-averaged errors on one test fold. Rows without zero elements are left
/// out of the absolute average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldErrors {
    pub fold: usize,
    pub rows: usize,
    pub relative: Triple,
    pub absolute: Option<Triple>,
}

impl FoldErrors {
    pub fn from_rows(fold: usize, rows: &[RowErrors]) -> Result<Self> {
        let rel: Vec<Triple> = rows.iter().map(|r| r.relative).collect();
        let abs: Vec<Triple> = rows.iter().filter_map(|r| r.absolute).collect();
        Ok(Self {
            fold,
            rows: rows.len(),
            relative: Triple::average(&rel).ok_or_else(|| Error::Domain(format!("fold {fold} has no test rows")))?,
            absolute: Triple::average(&abs),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TripleSummary {
    pub min: Summary,
    pub mean: Summary,
    pub max: Summary,
}

impl TripleSummary {
    fn of(items: &[Triple]) -> Self {
        let pick = |f: fn(&Triple) -> f64| Summary::of(&items.iter().map(f).collect::<Vec<_>>());
        Self {
            min: pick(|t| t.min),
            mean: pick(|t| t.mean),
            max: pick(|t| t.max),
        }
    }
}

/// Fold-level errors with mean ± std across folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub method: String,
    pub mask_ratio: f64,
    pub folds: Vec<FoldErrors>,
    pub relative: TripleSummary,
    pub absolute: TripleSummary,
}

impl ErrorReport {
    pub fn from_folds(method: impl Into<String>, mask_ratio: f64, folds: Vec<FoldErrors>) -> Self {
        let rel: Vec<Triple> = folds.iter().map(|f| f.relative).collect();
        let abs: Vec<Triple> = folds.iter().filter_map(|f| f.absolute).collect();
        Self {
            method: method.into(),
            mask_ratio,
            relative: TripleSummary::of(&rel),
            absolute: TripleSummary::of(&abs),
            folds,
        }
    }
}

/// How test rows are masked and how many threads score them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub mask_ratio: f64,
    pub mask_mode: MaskMode,
    pub inference: InferenceConfig,
    #[serde(skip)]
    pub jobs: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            mask_ratio: 0.0,
            mask_mode: MaskMode::Rows,
            inference: InferenceConfig::default(),
            jobs: 1,
        }
    }
}

impl EvalSettings {
    pub fn with_ratio(mask_ratio: f64, seed: u64) -> Self {
        Self {
            mask_ratio,
            inference: InferenceConfig {
                seed,
                ..InferenceConfig::default()
            },
            ..Self::default()
        }
    }
}

/// Hidden flags for test row `row`, reproducible from the inference seed.
pub fn eval_mask(data: &Dataset, row: usize, settings: &EvalSettings) -> Result<Vec<bool>> {
    let mut rng = stream(settings.inference.seed, &format!("eval-mask-{row}"));
    let mask = Mask::random(settings.mask_mode, settings.mask_ratio, data.phases(), data.temps(), &mut rng)?;
    Ok(mask.hidden_flags(data.phases(), data.temps()))
}

/// Runs `f` over `items` on up to `jobs` scoped threads, keeping order.
pub(crate) fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Result<Vec<R>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok(out)
    })
}

/// Candidates for one test row under the evaluation mask. Plain models see
/// hidden entries filled with training means.
pub fn row_candidates(ck: &Checkpoint, data: &Dataset, row: usize, settings: &EvalSettings) -> Result<Vec<Composition>> {
    let hidden = eval_mask(data, row, settings)?;
    let cfg = InferenceConfig {
        seed: derive_seed(settings.inference.seed, &format!("row-{row}")),
        mean_fill_plain: true,
        ..settings.inference.clone()
    };
    Ok(predict_designs(ck, &data.targets[row], &hidden, &cfg)?
        .into_iter()
        .map(|c| c.composition)
        .collect())
}

/// Scores a checkpoint on the rows of `test_fold`.
pub fn evaluate_model(ck: &Checkpoint, data: &Dataset, test_fold: usize, settings: &EvalSettings) -> Result<FoldErrors> {
    ck.schema.check(data)?;
    let (_, test) = data.split(test_fold);
    let rows = par_map(&test, settings.jobs, |r| {
        row_errors(*r, &data.compositions[*r].0, &row_candidates(ck, data, *r, settings)?)
    })?;
    FoldErrors::from_rows(test_fold, &rows)
}

/// Trains on four folds and tests on the fifth, for each fold in `folds`.
pub fn cross_validate(cfg: &TrainConfig, data: &Dataset, settings: &EvalSettings, folds: &[usize]) -> Result<ErrorReport> {
    let mut out = Vec::with_capacity(folds.len());
    for f in folds {
        let ck = train_excluding_fold(cfg, data, *f)?;
        out.push(evaluate_model(&ck, data, *f, settings)?);
    }
    Ok(ErrorReport::from_folds(cfg.model_kind.name(), settings.mask_ratio, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub mask_ratio: f64,
    pub relative_min: f64,
    pub relative_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub method: String,
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    /// Whether each min error is at least the previous one minus `slack`.
    pub fn is_non_decreasing(&self, slack: f64) -> bool {
        self.points.windows(2).all(|w| w[1].relative_min >= w[0].relative_min - slack)
    }

    pub fn at(&self, ratio: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| (p.mask_ratio - ratio).abs() < 1e-9)
    }
}

pub const SWEEP_RATIOS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Min-relative error of a checkpoint on `test_fold` at each mask ratio.
pub fn missing_ratio_sweep(
    ck: &Checkpoint,
    data: &Dataset,
    test_fold: usize,
    ratios: &[f64],
    settings: &EvalSettings,
) -> Result<SweepCurve> {
    let mut points = Vec::with_capacity(ratios.len());
    for r in ratios {
        let s = EvalSettings {
            mask_ratio: *r,
            ..settings.clone()
        };
        let f = evaluate_model(ck, data, test_fold, &s)?;
        points.push(SweepPoint {
            mask_ratio: *r,
            relative_min: f.relative.min,
            relative_mean: f.relative.mean,
        });
    }
    Ok(SweepCurve {
        method: ck.kind().name().into(),
        points,
    })
}

/// Per-phase relative L1 error `Σ_t |ŷ − y| / Σ_t y` over observed cells;
/// `None` for phases with no observed mass.
pub fn phase_errors(predicted: &[f64], y_true: &[f64], hidden: &[bool], phases: usize) -> Result<Vec<Option<f64>>> {
    if predicted.len() != y_true.len() || hidden.len() != y_true.len() || phases == 0 || y_true.len() % phases != 0 {
        return Err(Error::dim("phase errors", &[y_true.len()], &[predicted.len(), hidden.len()]));
    }
    let t = y_true.len() / phases;
    Ok((0..phases)
        .map(|p| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in p * t..(p + 1) * t {
                if !hidden[j] {
                    num += (predicted[j] - y_true[j]).abs();
                    den += y_true[j].abs();
                }
            }
            (den > 0.0).then(|| num / den)
        })
        .collect())
}

fn mean_present(v: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = v.iter().flatten().copied().collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Mean per-phase error of one design against a target: the search objective.
pub fn design_error(spec: &SimulatorSpec, x: &Composition, y_true: &[f64], hidden: &[bool]) -> Result<f64> {
    let d = spec.simulate(x)?;
    Ok(mean_present(&phase_errors(&d.values, y_true, hidden, spec.phases)?))
}

/// Closed-loop result for one query: the minimum over candidates of each
/// phase's error, and their average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoop {
    pub per_phase: Vec<Option<f64>>,
    pub average: f64,
    pub candidates: usize,
}

pub fn closed_loop_verify(spec: &SimulatorSpec, candidates: &[Composition], hidden: &[bool], y_true: &[f64]) -> Result<ClosedLoop> {
    if candidates.is_empty() {
        return Err(Error::Domain("closed-loop check needs at least one candidate".into()));
    }
    let mut best: Vec<Option<f64>> = vec![None; spec.phases];
    for c in candidates {
        let d = spec.simulate(c)?;
        for (b, e) in best.iter_mut().zip(phase_errors(&d.values, y_true, hidden, spec.phases)?) {
            if let Some(e) = e {
                *b = Some(b.map_or(e, |v| v.min(e)));
            }
        }
    }
    Ok(ClosedLoop {
        average: mean_present(&best),
        per_phase: best,
        candidates: candidates.len(),
    })
}

/// Closed-loop results averaged over many queries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub method: String,
    pub mask_ratio: f64,
    pub labels: Vec<String>,
    pub per_phase: Vec<Option<f64>>,
    pub average: f64,
    pub queries: usize,
}

impl PhaseReport {
    pub fn from_queries(method: impl Into<String>, mask_ratio: f64, labels: Vec<String>, items: &[ClosedLoop]) -> Self {
        let per_phase: Vec<Option<f64>> = (0..labels.len())
            .map(|p| {
                let v: Vec<f64> = items.iter().filter_map(|c| c.per_phase[p]).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        let average = if items.is_empty() {
            0.0
        } else {
            items.iter().map(|c| c.average).sum::<f64>() / items.len() as f64
        };
        Self {
            method: method.into(),
            mask_ratio,
            labels,
            per_phase,
            average,
            queries: items.len(),
        }
    }
}

/// Predicts designs for test rows and re-simulates them.
pub fn closed_loop_eval(
    spec: &SimulatorSpec,
    ck: &Checkpoint,
    data: &Dataset,
    rows: &[usize],
    settings: &EvalSettings,
) -> Result<PhaseReport> {
    ck.schema.check(data)?;
    let items = par_map(rows, settings.jobs, |r| {
        let hidden = eval_mask(data, *r, settings)?;
        let cands = row_candidates(ck, data, *r, settings)?;
        closed_loop_verify(spec, &cands, &hidden, &data.targets[*r])
    })?;
    Ok(PhaseReport::from_queries(ck.kind().name(), settings.mask_ratio, data.labels.clone(), &items))
}

#[cfg(test)]
mod tests;
