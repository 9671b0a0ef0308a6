//! FCC search objective and a Gaussian-process / expected-improvement
//! minimizer over box-and-sum constrained spaces.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::simulator::{fcc_extract, Composition, SimulatorSpec, AUX};
use crate::{Error, Result};

/// Axis-aligned box with an optional cap on the coordinate sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sum_cap: Option<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, sum_cap: Option<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::dim("search box", &[lower.len()], &[upper.len()]));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("search box lower bound exceeds upper bound".into()));
        }
        if let Some(cap) = sum_cap {
            if lower.iter().sum::<f64>() > cap {
                return Err(Error::Config(format!("sum cap {cap} below the box's minimum sum")));
            }
        }
        Ok(Self { lower, upper, sum_cap })
    }

    /// Auxiliary-element box used by the composition searches: every element
    /// between zero and a generous multiple of its largest base-alloy value,
    /// total capped at 15%.
    pub fn alloy_default() -> Self {
        let upper = vec![0.5, 7.0, 4.0, 0.3, 8.0, 0.3, 1.5, 1.5, 2.5];
        Self::new(vec![0.0; AUX], upper, Some(15.0)).expect("static box")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| v >= l && v <= u)
            && self.sum_cap.is_none_or(|c| x.iter().sum::<f64>() <= c)
    }

    /// Uniform over the feasible set, by rejection.
    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        loop {
            let x: Vec<f64> = self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| if l == u { *l } else { rng.random_range(*l..=*u) })
                .collect();
            if self.contains(&x) {
                return x;
            }
        }
    }

    /// Clamps to the box, then rescales toward the lower corner until the sum
    /// cap holds.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = x
            .iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((v, l), u)| v.clamp(*l, *u))
            .collect();
        if let Some(cap) = self.sum_cap {
            let s: f64 = y.iter().sum();
            if s > cap {
                let base: f64 = self.lower.iter().sum();
                let k = (cap - base) / (s - base);
                for (v, l) in y.iter_mut().zip(&self.lower) {
                    *v = l + (*v - l) * k;
                }
                // Guard against rounding nudging the sum over the cap.
                while y.iter().sum::<f64>() > cap {
                    for (v, l) in y.iter_mut().zip(&self.lower) {
                        *v = l + (*v - l) * (1.0 - 1e-12);
                    }
                }
            }
        }
        y
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((v, l), u)| if u > l { (v - l) / (u - l) } else { 0.0 })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoObjectiveConfig {
    /// FCC line `y500 = a·y200 + b`.
    pub line: (f64, f64),
    pub d1_threshold: f64,
    pub cutoff: f64,
    pub weights: [f64; 4],
    pub sigma2: f64,
    pub constraint_cap: f64,
}

impl BoObjectiveConfig {
    pub fn with_line(line: (f64, f64)) -> Self {
        Self {
            line,
            d1_threshold: 0.05,
            cutoff: 0.88,
            weights: [1.0, 1.0, 0.1, -0.01],
            sigma2: 0.01,
            constraint_cap: 15.0,
        }
    }

    /// Perpendicular distance of `(y200, y500)` to the line.
    pub fn d1(&self, y200: f64, y500: f64) -> f64 {
        let (a, b) = self.line;
        (y500 - a * y200 - b).abs() / (1.0 + a * a).sqrt()
    }

    pub fn d2(&self, y200: f64) -> f64 {
        y200 - self.cutoff
    }

    /// Inside the accepted region: close to the line and right of the cutoff.
    pub fn in_region(&self, y200: f64, y500: f64) -> bool {
        self.d1(y200, y500) < self.d1_threshold && self.d2(y200) > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoObjective {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub total: f64,
}

/// `L1 + L2 + 0.1·L3 − 0.01·L4` (with the configured weights). `visited`
/// holds earlier `(y200, y500)` points.
pub fn bo_objective(y200: f64, y500: f64, x: &Composition, cfg: &BoObjectiveConfig, visited: &[(f64, f64)]) -> BoObjective {
    let d1 = cfg.d1(y200, y500);
    let l1 = if d1 < cfg.d1_threshold { 0.0 } else { d1 * d1 };
    let d2 = cfg.d2(y200);
    let l2 = if d2 > 0.0 { 0.0 } else { d2 * d2 };
    let l3 = visited
        .iter()
        .map(|(a, b)| {
            let dist2 = (a - y200).powi(2) + (b - y500).powi(2);
            libm::exp(-dist2 / cfg.sigma2)
        })
        .fold(0.0, f64::max);
    let l4 = x.aux().iter().filter(|v| **v > 1e-6).count() as f64;
    let w = cfg.weights;
    BoObjective {
        l1,
        l2,
        l3,
        l4,
        total: w[0] * l1 + w[1] * l2 + w[2] * l3 + w[3] * l4,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpEiConfig {
    /// Random evaluations before the surrogate takes over.
    pub initial: usize,
    pub candidates: usize,
    pub noise: f64,
    /// Share of candidates drawn around the incumbent instead of uniformly.
    pub local_fraction: f64,
    /// Local perturbation scale as a fraction of each box side.
    pub local_scale: f64,
}

impl Default for GpEiConfig {
    fn default() -> Self {
        Self {
            initial: 5,
            candidates: 1024,
            noise: 1e-6,
            local_fraction: 0.5,
            local_scale: 0.1,
        }
    }
}

/// One evaluated point of a minimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub x: Vec<f64>,
    pub value: f64,
    pub best_so_far: f64,
}

struct Gp {
    xs: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    inv: DMatrix<f64>,
    length: f64,
    mean: f64,
    scale: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Gp {
    fn fit(xs: Vec<Vec<f64>>, ys: &[f64], noise: f64) -> Result<Self> {
        let n = xs.len();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let mut dists: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in 0..i {
                dists.push(sq_dist(&xs[i], &xs[j]).sqrt());
            }
        }
        dists.sort_by(f64::total_cmp);
        let length = match dists.get(dists.len() / 2) {
            Some(d) if *d > 0.0 => *d,
            _ => 1.0,
        };
        let k = |a: &[f64], b: &[f64]| libm::exp(-sq_dist(a, b) / (2.0 * length * length));
        let y = DVector::from_iterator(n, ys.iter().map(|v| (v - mean) / scale));
        let mut jitter = noise;
        for _ in 0..8 {
            let km = DMatrix::from_fn(n, n, |i, j| k(&xs[i], &xs[j]) + if i == j { jitter } else { 0.0 });
            if let Some(ch) = km.cholesky() {
                let alpha = ch.solve(&y);
                let inv = ch.inverse();
                return Ok(Self {
                    xs,
                    alpha,
                    inv,
                    length,
                    mean,
                    scale,
                });
            }
            jitter *= 10.0;
        }
        Err(Error::Numeric {
            net: "gaussian process".into(),
            detail: "kernel matrix not positive definite".into(),
        })
    }

    /// Standardized predictive mean and standard deviation.
    fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.xs.len();
        let kx = DVector::from_iterator(
            n,
            self.xs
                .iter()
                .map(|xi| libm::exp(-sq_dist(xi, x) / (2.0 * self.length * self.length))),
        );
        let mu = kx.dot(&self.alpha);
        let var = 1.0 - kx.dot(&(&self.inv * &kx));
        (mu, var.max(1e-12).sqrt())
    }
}

fn normal_pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Expected improvement below `best` for a Gaussian prediction.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64) -> f64 {
    if sigma <= 0.0 {
        return (best - mu).max(0.0);
    }
    let z = (best - mu) / sigma;
    (best - mu) * normal_cdf(z) + sigma * normal_pdf(z)
}

/// Sequential GP-EI minimization. `objective` receives each proposed point
/// (always inside `bx`) and the evaluations so far. Runs exactly `budget`
/// evaluations.
pub fn gp_ei_minimize(
    bx: &SearchBox,
    budget: usize,
    cfg: &GpEiConfig,
    rng: &mut Rng,
    mut objective: impl FnMut(&[f64], &[Evaluation]) -> Result<f64>,
) -> Result<Vec<Evaluation>> {
    let mut trace: Vec<Evaluation> = Vec::with_capacity(budget);
    let mut best = f64::INFINITY;
    for step in 0..budget {
        let x = if step < cfg.initial.max(1) {
            bx.sample(rng)
        } else {
            propose(bx, cfg, &trace, rng)?
        };
        let value = objective(&x, &trace)?;
        if !value.is_finite() {
            return Err(Error::NumericInput(format!("objective returned {value}")));
        }
        best = best.min(value);
        trace.push(Evaluation { x, value, best_so_far: best });
    }
    Ok(trace)
}

fn propose(bx: &SearchBox, cfg: &GpEiConfig, trace: &[Evaluation], rng: &mut Rng) -> Result<Vec<f64>> {
    let xs: Vec<Vec<f64>> = trace.iter().map(|e| bx.normalize(&e.x)).collect();
    let ys: Vec<f64> = trace.iter().map(|e| e.value).collect();
    let gp = Gp::fit(xs, &ys, cfg.noise)?;
    let incumbent = trace
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("non-empty trace");
    let best = (incumbent.value - gp.mean) / gp.scale;
    let n_local = (cfg.candidates as f64 * cfg.local_fraction).round() as usize;
    let mut chosen: Option<(f64, Vec<f64>)> = None;
    for i in 0..cfg.candidates.max(1) {
        let cand = if i < n_local {
            let raw: Vec<f64> = incumbent
                .x
                .iter()
                .zip(bx.lower.iter().zip(&bx.upper))
                .map(|(v, (l, u))| v + (u - l) * cfg.local_scale * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            bx.project(&raw)
        } else {
            bx.sample(rng)
        };
        let (mu, sd) = gp.predict(&bx.normalize(&cand));
        let ei = expected_improvement(mu, sd, best);
        if chosen.as_ref().is_none_or(|(e, _)| ei > *e) {
            chosen = Some((ei, cand));
        }
    }
    Ok(chosen.expect("at least one candidate").1)
}

/// One evaluated composition of the FCC search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoPoint {
    pub composition: Composition,
    pub y200: f64,
    pub y500: f64,
    pub objective: BoObjective,
    pub best_so_far: f64,
}

/// Minimizes [`bo_objective`] over auxiliary fractions in `bx`; each point's
/// L3 term uses the FCC values of all earlier points.
pub fn bo_search(
    cfg: &BoObjectiveConfig,
    spec: &SimulatorSpec,
    bx: &SearchBox,
    budget: usize,
    engine: &GpEiConfig,
    rng: &mut Rng,
) -> Result<Vec<BoPoint>> {
    if budget == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    if bx.dim() != AUX || bx.sum_cap.is_none_or(|c| c > cfg.constraint_cap) {
        return Err(Error::Config(format!(
            "search box must be {AUX}-dimensional with sum cap at most {}",
            cfg.constraint_cap
        )));
    }
    let mut points: Vec<BoPoint> = Vec::with_capacity(budget);
    let mut visited: Vec<(f64, f64)> = Vec::with_capacity(budget);
    gp_ei_minimize(bx, budget, engine, rng, |aux, _| {
        let x = Composition::from_aux(aux)?;
        let (y200, y500) = fcc_extract(spec, &spec.simulate(&x)?)?;
        let obj = bo_objective(y200, y500, &x, cfg, &visited);
        visited.push((y200, y500));
        let best = points.last().map_or(obj.total, |p| p.best_so_far.min(obj.total));
        points.push(BoPoint {
            composition: x,
            y200,
            y500,
            objective: obj,
            best_so_far: best,
        });
        Ok(obj.total)
    })?;
    Ok(points)
}
