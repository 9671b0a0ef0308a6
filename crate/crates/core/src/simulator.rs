//! Deterministic pseudo phase-diagram simulator.
//!
//! Stands in for a thermodynamic package. A [`SimulatorSpec`] holds every
//! coefficient, so the forward map is reproducible from the JSON document
//! alone. For a composition `x` (percent, element order [`ELEMENTS`]):
//!
//! ```text
//! φ_k   = ln(1 + x_{e_k} / c_k)                       for each single element e_k
//! s     = (x_a − x_b)² + (x_a + x_b)                  symmetric pair (a, b)
//! φ_s   = ln(1 + s / c_s)
//! φ_π   = ln(1 + x_a·x_b / c_π)
//! φ_ij  = φ_i · φ_j                                   for each listed product
//! u     = B·φ + u₀                                     (U = 2(P − 2) + 2 rows)
//!
//! LIQUID   logit(T) = (T − m) / w_m,   m = m₀ + m₁·σ(u₀)
//! FCC      logit(T) = f₀ + f₁·tanh(u₁)
//! phase q  logit(T) = A_q − softplus((T − S_q) / w_s)
//!          A_q = a₀ + a₁·tanh(u_{2q} / a₂) + κ·ln((Σ_aux + 0.1) / r)
//!          S_q = s₀ + s₁·σ(u_{2q+1})
//! ```
//!
//! with `q = 1..P−2` indexing the remaining phases, and each temperature column
//! normalized by a softmax. Mixing `a` and `b` only through `s` and `x_a·x_b`
//! makes swapping them an exact invariance of the output.
//!
//! `exp`, `ln`, `tanh` come from `libm` so results do not depend on the
//! platform math library.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

static SIMULATIONS: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);

/// Number of [`SimulatorSpec::simulate`] calls made by this process so far.
pub fn simulation_count() -> u64 {
    SIMULATIONS.load(std::sync::atomic::Ordering::Relaxed)
}

pub const ELEMENTS: [&str; 10] = ["Cr", "Cu", "Mg", "Ti", "Zn", "Zr", "Mn", "Si", "Ni", "Al"];
/// Number of composition entries.
pub const M: usize = 10;
/// Auxiliary (non-Al) element count.
pub const AUX: usize = 9;
pub const AL: usize = 9;
pub const MG: usize = 2;
pub const ZN: usize = 4;

pub const SPEC_VERSION: u32 = 1;

pub const DEFAULT_LABELS: [&str; 8] = [
    "LIQUID", "FCC_A1", "AL2CU", "MG2SI", "AL6MN", "AL3TI", "AL3ZR", "ALMG_BETA",
];

/// 0 to 1500 °C in steps of 50.
pub fn temperature_grid() -> Vec<f64> {
    (0..=30).map(|i| 50.0 * i as f64).collect()
}

/// Element mass fractions in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Composition(pub [f64; M]);

impl Composition {
    /// Checks finiteness, non-negativity and the 100% total.
    pub fn new(fractions: [f64; M]) -> Result<Self> {
        let c = Self(fractions);
        c.validate()?;
        Ok(c)
    }

    /// Auxiliary fractions with aluminium as the balance.
    pub fn from_aux(aux: &[f64]) -> Result<Self> {
        if aux.len() != AUX {
            return Err(Error::dim("auxiliary fractions", &[AUX], &[aux.len()]));
        }
        let mut f = [0.0; M];
        f[..AUX].copy_from_slice(aux);
        f[AL] = 100.0 - aux.iter().sum::<f64>();
        Self::new(f)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in ELEMENTS.iter().zip(self.0) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!("{name} fraction {v} must be finite and non-negative")));
            }
        }
        let total: f64 = self.0.iter().sum();
        if (total - 100.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("fractions sum to {total}, expected 100")));
        }
        Ok(())
    }

    pub fn aux(&self) -> &[f64] {
        &self.0[..AUX]
    }

    pub fn aux_total(&self) -> f64 {
        self.aux().iter().sum()
    }

    /// Clips negatives to zero and rescales to a 100% total.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        if raw.len() != M {
            return Err(Error::dim("composition", &[M], &[raw.len()]));
        }
        let mut f = [0.0; M];
        for (o, v) in f.iter_mut().zip(raw) {
            if !v.is_finite() {
                return Err(Error::NumericInput(format!("composition entry {v}")));
            }
            *o = v.max(0.0);
        }
        let total: f64 = f.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain("composition has no positive entry".into()));
        }
        f.iter_mut().for_each(|v| *v *= 100.0 / total);
        // Absorb rounding drift into the largest entry.
        let imax = (0..M).max_by(|a, b| f[*a].total_cmp(&f[*b])).unwrap_or(AL);
        let rest: f64 = (0..M).filter(|i| *i != imax).map(|i| f[i]).sum();
        f[imax] = 100.0 - rest;
        Self::new(f)
    }
}

/// Exchanges the two entries of `pair`.
pub fn swap(x: &Composition, pair: (usize, usize)) -> Composition {
    let mut f = x.0;
    f.swap(pair.0, pair.1);
    Composition(f)
}

/// Phase fractions, phase-major `[P × T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub labels: Vec<String>,
    pub temperatures: Vec<f64>,
    pub values: Vec<f64>,
}

impl PhaseDiagram {
    pub fn new(labels: Vec<String>, temperatures: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != labels.len() * temperatures.len() {
            return Err(Error::dim(
                "phase diagram",
                &[labels.len(), temperatures.len()],
                &[values.len()],
            ));
        }
        Ok(Self {
            labels,
            temperatures,
            values,
        })
    }

    pub fn phases(&self) -> usize {
        self.labels.len()
    }

    pub fn temps(&self) -> usize {
        self.temperatures.len()
    }

    pub fn get(&self, phase: usize, t: usize) -> f64 {
        self.values[phase * self.temps() + t]
    }

    pub fn row(&self, phase: usize) -> &[f64] {
        let t = self.temps();
        &self.values[phase * t..(phase + 1) * t]
    }

    /// Feature names `phase:<label>@<temp>` in flattening order.
    pub fn feature_names(labels: &[String], temperatures: &[f64]) -> Vec<String> {
        labels
            .iter()
            .flat_map(|l| temperatures.iter().map(move |t| format!("{l}@{t}")))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveParams {
    pub melt_base: f64,
    pub melt_span: f64,
    pub melt_width: f64,
    pub fcc_base: f64,
    pub fcc_span: f64,
    pub amp_center: f64,
    pub amp_span: f64,
    pub amp_scale: f64,
    pub solvus_base: f64,
    pub solvus_span: f64,
    pub solvus_width: f64,
    /// κ: leaner alloys form fewer compounds.
    pub solute_coupling: f64,
    /// r: auxiliary total (percent) at which the coupling term vanishes.
    pub solute_reference: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self {
            melt_base: 560.0,
            melt_span: 80.0,
            melt_width: 20.0,
            fcc_base: 4.3,
            fcc_span: 0.5,
            amp_center: -0.5,
            amp_span: 2.5,
            amp_scale: 2.5,
            solvus_base: 250.0,
            solvus_span: 300.0,
            solvus_width: 30.0,
            solute_coupling: 1.0,
            solute_reference: 5.0,
        }
    }
}

/// Every coefficient of the forward map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatorSpec {
    pub version: u32,
    pub seed: u64,
    pub phases: usize,
    pub labels: Vec<String>,
    pub temperatures: Vec<f64>,
    pub elements: Vec<String>,
    /// Index of the FCC-like phase.
    pub fcc_phase: usize,
    /// Index of the LIQUID-like phase.
    pub liquid_phase: usize,
    pub symmetric_pair: (usize, usize),
    /// `(element index, scale)` for each single-element feature.
    pub single_features: Vec<(usize, f64)>,
    pub pair_sum_scale: f64,
    pub pair_product_scale: f64,
    /// Products of single-element features, by position in `single_features`.
    pub products: Vec<(usize, usize)>,
    /// `U × F` mixing matrix.
    pub mixing: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    pub curves: CurveParams,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        libm::log1p(libm::exp(v))
    }
}

impl SimulatorSpec {
    /// Draws a spec with `phases` phases from `seed`. Mixing rows are rescaled
    /// so each response has unit-order spread over the base alloys, and the
    /// offset centres them.
    pub fn generate(seed: u64, phases: usize) -> Result<Self> {
        if phases < 3 {
            return Err(Error::Config(format!("need at least 3 phases, got {phases}")));
        }
        let labels: Vec<String> = (0..phases)
            .map(|i| DEFAULT_LABELS.get(i).map_or_else(|| format!("PHASE_{i}"), |s| s.to_string()))
            .collect();
        let single_features = vec![
            (0, 0.1),
            (1, 1.0),
            (3, 0.05),
            (5, 0.05),
            (6, 0.2),
            (7, 0.2),
            (8, 0.2),
        ];
        // Cu·Si, Mn·Cr, Ti·Zr
        let products = vec![(1, 5), (4, 0), (2, 3)];
        let n_feat = single_features.len() + 2 + products.len();
        let n_resp = 2 * (phases - 2) + 2;
        let mut rng = crate::rng::stream(seed, "simulator-spec");
        let mut mixing: Vec<Vec<f64>> = (0..n_resp)
            .map(|_| (0..n_feat).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        // Randomly strengthen one feature per row so responses stay distinct.
        for row in mixing.iter_mut() {
            let j = rng.random_range(0..n_feat);
            row[j] += 2.0 * row[j].signum();
        }
        let mut spec = Self {
            version: SPEC_VERSION,
            seed,
            phases,
            labels,
            temperatures: temperature_grid(),
            elements: ELEMENTS.iter().map(|s| s.to_string()).collect(),
            fcc_phase: 1,
            liquid_phase: 0,
            symmetric_pair: (MG, ZN),
            single_features,
            pair_sum_scale: 1.0,
            pair_product_scale: 0.5,
            products,
            mixing,
            offset: vec![0.0; n_resp],
            curves: CurveParams::default(),
        };
        let feats: Vec<Vec<f64>> = base_alloys().iter().map(|(_, x)| spec.features(x)).collect();
        let n = feats.len() as f64;
        for r in 0..n_resp {
            let us: Vec<f64> = feats
                .iter()
                .map(|f| spec.mixing[r].iter().zip(f).map(|(b, v)| b * v).sum())
                .collect();
            let mean = us.iter().sum::<f64>() / n;
            let sd = (us.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / n).sqrt();
            let k = 1.5 / sd.max(1e-12);
            spec.mixing[r].iter_mut().for_each(|b| *b *= k);
            spec.offset[r] = -mean * k;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(Error::Version {
                found: self.version.to_string(),
                expected: SPEC_VERSION.to_string(),
            });
        }
        let n_feat = self.single_features.len() + 2 + self.products.len();
        let n_resp = 2 * (self.phases.saturating_sub(2)) + 2;
        let bad = |m: String| Err(Error::Config(m));
        if self.phases < 3 || self.labels.len() != self.phases {
            return bad(format!("{} labels for {} phases", self.labels.len(), self.phases));
        }
        if self.elements.len() != M {
            return bad(format!("expected {M} elements, got {}", self.elements.len()));
        }
        if self.mixing.len() != n_resp || self.mixing.iter().any(|r| r.len() != n_feat) || self.offset.len() != n_resp {
            return bad(format!("mixing must be {n_resp}×{n_feat} with {n_resp} offsets"));
        }
        let (a, b) = self.symmetric_pair;
        if a >= AUX || b >= AUX || a == b {
            return bad("symmetric pair must name two distinct auxiliary elements".into());
        }
        if self.single_features.iter().any(|(e, c)| *e >= AUX || *e == a || *e == b || !(*c > 0.0)) {
            return bad("single features must use positive scales on non-pair auxiliary elements".into());
        }
        let nf = self.single_features.len();
        if self.products.iter().any(|(i, j)| *i >= nf || *j >= nf) {
            return bad("product indices out of range".into());
        }
        if self.fcc_phase == self.liquid_phase || self.fcc_phase >= self.phases || self.liquid_phase >= self.phases {
            return bad("fcc and liquid phases must be distinct valid indices".into());
        }
        Ok(())
    }

    /// Feature vector φ(x).
    pub fn features(&self, x: &Composition) -> Vec<f64> {
        let f = &x.0;
        let singles: Vec<f64> = self
            .single_features
            .iter()
            .map(|(e, c)| libm::log1p(f[*e] / c))
            .collect();
        let (a, b) = (f[self.symmetric_pair.0], f[self.symmetric_pair.1]);
        let d = a - b;
        let s = d * d + (a + b);
        let mut out = singles.clone();
        out.push(libm::log1p(s / self.pair_sum_scale));
        out.push(libm::log1p(a * b / self.pair_product_scale));
        out.extend(self.products.iter().map(|(i, j)| singles[*i] * singles[*j]));
        out
    }

    /// Response vector u = B·φ + u₀.
    pub fn responses(&self, x: &Composition) -> Vec<f64> {
        let phi = self.features(x);
        self.mixing
            .iter()
            .zip(&self.offset)
            .map(|(row, o)| row.iter().zip(&phi).map(|(b, v)| b * v).sum::<f64>() + o)
            .collect()
    }

    pub fn simulate(&self, x: &Composition) -> Result<PhaseDiagram> {
        SIMULATIONS.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        x.validate()?;
        let u = self.responses(x);
        let c = &self.curves;
        let p = self.phases;
        let t_len = self.temperatures.len();
        let melt = c.melt_base + c.melt_span * sigmoid(u[0]);
        let fcc = c.fcc_base + c.fcc_span * libm::tanh(u[1]);
        let (pa, pb) = self.symmetric_pair;
        let total = (0..AUX)
            .filter(|i| *i != pa && *i != pb)
            .fold(x.0[pa] + x.0[pb], |acc, i| acc + x.0[i]);
        let solute = c.solute_coupling * libm::log((total + 0.1) / c.solute_reference);
        let others: Vec<usize> = (0..p).filter(|i| *i != self.fcc_phase && *i != self.liquid_phase).collect();
        let shapes: Vec<(f64, f64)> = (0..others.len())
            .map(|q| {
                let amp = c.amp_center + c.amp_span * libm::tanh(u[2 + 2 * q] / c.amp_scale) + solute;
                let solvus = c.solvus_base + c.solvus_span * sigmoid(u[3 + 2 * q]);
                (amp, solvus)
            })
            .collect();
        let mut values = vec![0.0; p * t_len];
        let mut logits = vec![0.0; p];
        for (ti, temp) in self.temperatures.iter().enumerate() {
            logits[self.liquid_phase] = (temp - melt) / c.melt_width;
            logits[self.fcc_phase] = fcc;
            for (q, phase) in others.iter().enumerate() {
                let (amp, solvus) = shapes[q];
                logits[*phase] = amp - softplus((temp - solvus) / c.solvus_width);
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
            let z: f64 = exps.iter().sum();
            for (i, e) in exps.iter().enumerate() {
                values[i * t_len + ti] = e / z;
            }
        }
        PhaseDiagram::new(self.labels.clone(), self.temperatures.clone(), values)
    }

    pub fn feature_names(&self) -> Vec<String> {
        PhaseDiagram::feature_names(&self.labels, &self.temperatures)
    }

    pub fn width(&self) -> usize {
        self.phases * self.temperatures.len()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("simulator spec: {e}")))?;
        if let Some(v) = value.get("version").and_then(|v| v.as_u64()) {
            if v != u64::from(SPEC_VERSION) {
                return Err(Error::Version {
                    found: v.to_string(),
                    expected: SPEC_VERSION.to_string(),
                });
            }
        }
        let spec: Self = serde_json::from_value(value).map_err(|e| Error::Config(format!("simulator spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// FCC-like fraction at 200 °C and 500 °C.
pub fn fcc_extract(spec: &SimulatorSpec, d: &PhaseDiagram) -> Result<(f64, f64)> {
    let col = |temp: f64| {
        d.temperatures
            .iter()
            .position(|t| *t == temp)
            .ok_or_else(|| Error::Domain(format!("temperature grid lacks {temp}")))
    };
    if d.phases() <= spec.fcc_phase {
        return Err(Error::Domain(format!("diagram has {} phases", d.phases())));
    }
    Ok((d.get(spec.fcc_phase, col(200.0)?), d.get(spec.fcc_phase, col(500.0)?)))
}

/// Ordinary least squares `y = a·x + b`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::dim("line fit", &[xs.len()], &[ys.len()]));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Domain("line fit needs two distinct x values".into()));
    }
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

/// The FCC regression line through the base alloys.
pub fn base_fcc_line(spec: &SimulatorSpec) -> Result<(f64, f64)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (_, x) in base_alloys() {
        let (a, b) = fcc_extract(spec, &spec.simulate(&x)?)?;
        xs.push(a);
        ys.push(b);
    }
    fit_line(&xs, &ys)
}

const BASE_ALLOYS: [(&str, [f64; M]); 30] = [
    ("2014", [0.0, 6.014, 0.729, 0.063, 0.176, 0.0, 0.933, 0.893, 0.0, 91.192]),
    ("2018", [0.0, 5.975, 1.157, 0.034, 0.242, 0.0, 0.848, 0.449, 1.979, 89.316]),
    ("2024", [0.05, 4.35, 1.5, 0.05, 0.1, 0.0, 0.6, 0.1, 0.0, 93.25]),
    ("2025", [0.05, 4.45, 0.0, 0.05, 0.1, 0.0, 0.8, 0.85, 0.0, 93.7]),
    ("2218", [0.0, 5.659, 0.751, 0.057, 0.148, 0.0, 0.253, 0.556, 0.0, 92.576]),
    ("2219", [0.092, 6.177, 1.31, 0.085, 0.143, 0.0, 0.574, 0.648, 0.0, 90.971]),
    ("2618", [0.085, 6.08, 0.883, 0.115, 0.117, 0.0, 0.85, 0.89, 0.0, 90.98]),
    ("6053", [0.137, 0.892, 0.797, 0.111, 0.103, 0.0, 0.623, 1.383, 0.0, 95.954]),
    ("6061", [0.2, 0.275, 1.0, 0.05, 0.1, 0.0, 0.05, 0.6, 0.0, 97.725]),
    ("6063", [0.237, 0.435, 0.567, 0.09, 0.168, 0.0, 0.589, 0.638, 0.0, 97.276]),
    ("6066", [0.2, 0.95, 1.1, 0.1, 0.1, 0.0, 0.85, 1.35, 0.0, 95.35]),
    ("6070", [0.0, 0.733, 1.108, 0.138, 0.135, 0.0, 0.7, 0.965, 0.0, 96.221]),
    ("6082", [0.24, 0.198, 0.934, 0.041, 0.232, 0.0, 0.255, 0.624, 0.0, 97.476]),
    ("6101", [0.218, 0.7, 0.427, 0.106, 0.148, 0.058, 0.656, 1.067, 0.0, 96.62]),
    ("6151", [0.171, 0.137, 0.659, 0.04, 0.185, 0.0, 0.098, 1.281, 0.0, 97.429]),
    ("6201", [0.127, 0.721, 0.618, 0.104, 0.13, 0.0, 0.878, 1.119, 0.065, 96.238]),
    ("6351", [0.209, 0.728, 0.85, 0.074, 0.149, 0.0, 0.326, 0.995, 0.0, 96.669]),
    ("6463", [0.254, 0.264, 0.764, 0.077, 0.201, 0.0, 0.46, 0.353, 0.0, 97.627]),
    ("6951", [0.0, 0.694, 1.071, 0.133, 0.105, 0.0, 0.126, 1.123, 0.0, 96.748]),
    ("7001", [0.295, 1.66, 2.599, 0.096, 6.902, 0.0, 0.233, 0.105, 0.0, 88.11]),
    ("7005", [0.248, 2.046, 1.528, 0.076, 7.788, 0.125, 0.346, 0.327, 0.0, 87.516]),
    ("7020", [0.286, 0.352, 2.617, 0.031, 7.939, 0.083, 0.212, 0.05, 0.0, 88.43]),
    ("7034", [0.157, 2.21, 2.222, 0.058, 6.32, 0.0, 0.108, 0.223, 0.0, 88.702]),
    ("7039", [0.208, 0.471, 2.352, 0.096, 5.771, 0.151, 0.293, 0.318, 0.0, 90.34]),
    ("7068", [0.0, 2.217, 1.773, 0.058, 7.18, 0.0, 0.321, 0.164, 0.0, 88.287]),
    ("7075", [0.226, 0.72, 1.745, 0.077, 5.889, 0.144, 0.145, 0.334, 0.0, 90.72]),
    ("7076", [0.121, 1.607, 1.293, 0.044, 5.951, 0.135, 0.191, 0.354, 0.0, 90.304]),
    ("7175", [0.0, 1.719, 2.634, 0.083, 6.433, 0.146, 0.098, 0.097, 0.0, 88.79]),
    ("7178", [0.0, 1.987, 1.893, 0.099, 7.67, 0.0, 0.302, 0.321, 0.0, 87.728]),
    ("7475", [0.0, 2.491, 2.366, 0.042, 5.237, 0.153, 0.284, 0.071, 0.0, 89.356]),
];

/// The 30 reference alloys. 2024, 2025, 6061 and 6066 are the published
/// compositions; the others are synthetic Al-dominant stand-ins.
pub fn base_alloys() -> Vec<(String, Composition)> {
    BASE_ALLOYS
        .iter()
        .map(|(id, f)| (id.to_string(), Composition(*f)))
        .collect()
}

pub fn base_alloy(id: &str) -> Option<Composition> {
    BASE_ALLOYS.iter().find(|(i, _)| *i == id).map(|(_, f)| Composition(*f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> SimulatorSpec {
        SimulatorSpec::generate(7, 8).unwrap()
    }

    fn random_alloy(rng: &mut crate::rng::Rng) -> Composition {
        let bases = base_alloys();
        let (_, b) = &bases[rng.random_range(0..bases.len())];
        let aux: Vec<f64> = b.aux().iter().map(|v| v * rng.random_range(0.8..1.2)).collect();
        Composition::from_aux(&aux).unwrap()
    }

    #[test]
    fn base_alloys_are_valid() {
        let all = base_alloys();
        assert_eq!(all.len(), 30);
        for (id, x) in &all {
            x.validate().unwrap_or_else(|e| panic!("{id}: {e}"));
            assert!(x.0[AL] >= 80.0, "{id}");
        }
        let a = base_alloy("2024").unwrap();
        assert_eq!((a.0[1], a.0[2], a.0[AL]), (4.35, 1.5, 93.25));
        let b = base_alloy("6061").unwrap();
        assert_eq!((b.0[1], b.0[7], b.0[AL]), (0.275, 0.6, 97.725));
    }

    #[test]
    fn columns_are_distributions() {
        let s = spec();
        let mut rng = crate::rng::stream(1, "sim-test");
        for _ in 0..100 {
            let d = s.simulate(&random_alloy(&mut rng)).unwrap();
            for t in 0..d.temps() {
                let col: f64 = (0..d.phases()).map(|p| d.get(p, t)).sum();
                assert!((col - 1.0).abs() < 1e-9);
            }
            assert!(d.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn swap_is_exact_invariance() {
        let s = spec();
        let mut rng = crate::rng::stream(2, "sim-test");
        for _ in 0..100 {
            let x = random_alloy(&mut rng);
            let a = s.simulate(&x).unwrap();
            let b = s.simulate(&swap(&x, s.symmetric_pair)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn liquid_is_monotone_in_temperature() {
        let s = spec();
        for (_, x) in base_alloys() {
            let d = s.simulate(&x).unwrap();
            let row = d.row(s.liquid_phase);
            assert!(row.windows(2).all(|w| w[1] >= w[0]));
            assert!(row[row.len() - 1] > 0.999);
        }
    }

    #[test]
    fn rejects_invalid_compositions() {
        let s = spec();
        let mut f = base_alloy("2024").unwrap().0;
        f[AL] += 1.0;
        assert!(matches!(s.simulate(&Composition(f)), Err(Error::Domain(_))));
        f[AL] -= 1.0;
        f[0] = -0.01;
        f[AL] += 0.01;
        assert!(matches!(s.simulate(&Composition(f)), Err(Error::Domain(_))));
    }

    #[test]
    fn small_perturbations_move_outputs_little() {
        let s = spec();
        let x = base_alloy("7075").unwrap();
        let d0 = s.simulate(&x).unwrap();
        for e in 0..AUX {
            let mut f = x.0;
            f[e] += 1e-6;
            f[AL] -= 1e-6;
            let d1 = s.simulate(&Composition(f)).unwrap();
            let worst = d0.values.iter().zip(&d1.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-3, "element {e}: {worst}");
        }
    }

    #[test]
    fn spec_json_round_trips() {
        let s = spec();
        let back = SimulatorSpec::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(s, back);
        let x = base_alloy("2024").unwrap();
        assert_eq!(s.simulate(&x).unwrap(), back.simulate(&x).unwrap());
        let bumped = s.to_json().unwrap().replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(matches!(SimulatorSpec::from_json(&bumped), Err(Error::Version { .. })));
    }

    #[test]
    fn fcc_extract_reads_the_right_columns() {
        let s = spec();
        let t = temperature_grid();
        let mut values = vec![0.0; 8 * t.len()];
        for v in &mut values[t.len()..2 * t.len()] {
            *v = 0.9;
        }
        let d = PhaseDiagram::new(s.labels.clone(), t, values).unwrap();
        assert_eq!(fcc_extract(&s, &d).unwrap(), (0.9, 0.9));
        let short = PhaseDiagram::new(s.labels.clone(), vec![0.0, 100.0], vec![0.0; 16]).unwrap();
        assert!(matches!(fcc_extract(&s, &short), Err(Error::Domain(_))));
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [0.1, 0.4, 0.7, 0.9];
        let ys: Vec<f64> = xs.iter().map(|x| 0.45 * x + 0.56).collect();
        let (a, b) = fit_line(&xs, &ys).unwrap();
        assert!((a - 0.45).abs() < 1e-12 && (b - 0.56).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn normalized_is_valid(raw in proptest::collection::vec(-1.0f64..50.0, M)) {
            prop_assume!(raw.iter().any(|v| *v > 0.0));
            let c = Composition::normalized(&raw).unwrap();
            prop_assert!(c.0.iter().all(|v| *v >= 0.0));
            prop_assert!((c.0.iter().sum::<f64>() - 100.0).abs() <= 1e-9);
        }
    }
}
