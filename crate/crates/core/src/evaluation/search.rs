//! Simulator-in-the-loop baselines: random search, a genetic algorithm and
//! GP-EI, all minimizing the same design error.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::design_error;
use crate::datagen::{gp_ei_minimize, GpEiConfig, SearchBox};
use crate::rng::{stream, Rng};
use crate::simulator::{Composition, SimulatorSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Random,
    Ga,
    Bo,
}

impl SearchMethod {
    pub fn name(self) -> &'static str {
        match self {
            SearchMethod::Random => "random",
            SearchMethod::Ga => "ga",
            SearchMethod::Bo => "bo",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub calls: usize,
    pub error: f64,
    pub best_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub method: SearchMethod,
    pub budget: usize,
    pub steps: Vec<SearchStep>,
    pub best: Option<Composition>,
}

impl SearchTrace {
    pub fn best_error(&self) -> Option<f64> {
        self.steps.last().map(|s| s.best_error)
    }

    /// Simulator calls needed to reach `error` or below.
    pub fn calls_to_reach(&self, error: f64) -> Option<usize> {
        self.steps.iter().find(|s| s.best_error <= error).map(|s| s.calls)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population: usize,
    pub tournament: usize,
    pub blend_alpha: f64,
    /// Mutation σ as a fraction of each gene's range.
    pub mutation_scale: f64,
    pub mutation_prob: f64,
    pub elitism: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 20,
            tournament: 3,
            blend_alpha: 0.5,
            mutation_scale: 0.02,
            mutation_prob: 0.2,
            elitism: 1,
        }
    }
}

struct Recorder<'a> {
    spec: &'a SimulatorSpec,
    target: &'a [f64],
    hidden: &'a [bool],
    budget: usize,
    steps: Vec<SearchStep>,
    best: Option<(f64, Composition)>,
}

impl Recorder<'_> {
    fn done(&self) -> bool {
        self.steps.len() >= self.budget
    }

    fn eval(&mut self, aux: &[f64]) -> Result<f64> {
        let x = Composition::from_aux(aux)?;
        let error = design_error(self.spec, &x, self.target, self.hidden)?;
        if self.best.as_ref().is_none_or(|(b, _)| error < *b) {
            self.best = Some((error, x));
        }
        let best_error = self.best.as_ref().map_or(error, |b| b.0);
        self.steps.push(SearchStep {
            calls: self.steps.len() + 1,
            error,
            best_error,
        });
        Ok(error)
    }

    fn finish(self, method: SearchMethod) -> SearchTrace {
        SearchTrace {
            method,
            budget: self.budget,
            steps: self.steps,
            best: self.best.map(|b| b.1),
        }
    }
}

/// Searches the default alloy box for a design whose simulated diagram matches
/// `target` on the non-hidden entries, spending at most `budget` simulator calls.
pub fn search_baseline(
    method: SearchMethod,
    spec: &SimulatorSpec,
    target: &[f64],
    hidden: &[bool],
    budget: usize,
    seed: u64,
) -> Result<SearchTrace> {
    let bx = SearchBox::alloy_default();
    let mut rng = stream(seed, &format!("search-{}", method.name()));
    match method {
        SearchMethod::Random => {
            let mut rec = recorder(spec, target, hidden, budget)?;
            while !rec.done() {
                let x = bx.sample(&mut rng);
                rec.eval(&x)?;
            }
            Ok(rec.finish(method))
        }
        SearchMethod::Ga => ga_search(spec, target, hidden, budget, &GaConfig::default(), &[], &mut rng),
        SearchMethod::Bo => {
            let mut rec = recorder(spec, target, hidden, budget)?;
            if budget > 0 {
                gp_ei_minimize(&bx, budget, &GpEiConfig::default(), &mut rng, |x, _| rec.eval(x))?;
            }
            Ok(rec.finish(method))
        }
    }
}

fn recorder<'a>(spec: &'a SimulatorSpec, target: &'a [f64], hidden: &'a [bool], budget: usize) -> Result<Recorder<'a>> {
    if target.len() != spec.width() || hidden.len() != target.len() {
        return Err(Error::dim("search target", &[spec.width()], &[target.len(), hidden.len()]));
    }
    Ok(Recorder {
        spec,
        target,
        hidden,
        budget,
        steps: Vec::with_capacity(budget),
        best: None,
    })
}

/// Generational GA over auxiliary fractions. `seeds` replace the first random
/// individuals of the initial population.
pub fn ga_search(
    spec: &SimulatorSpec,
    target: &[f64],
    hidden: &[bool],
    budget: usize,
    cfg: &GaConfig,
    seeds: &[Vec<f64>],
    rng: &mut Rng,
) -> Result<SearchTrace> {
    if cfg.population == 0 || cfg.tournament == 0 || cfg.elitism >= cfg.population.max(1) {
        return Err(Error::Config("GA needs a positive population and tournament, and elitism below the population".into()));
    }
    let bx = SearchBox::alloy_default();
    let mut rec = recorder(spec, target, hidden, budget)?;
    let mut pop: Vec<(Vec<f64>, f64)> = Vec::with_capacity(cfg.population);
    for i in 0..cfg.population {
        if rec.done() {
            break;
        }
        let x = seeds.get(i).map_or_else(|| bx.sample(rng), |s| bx.project(s));
        let e = rec.eval(&x)?;
        pop.push((x, e));
    }
    let sigma: Vec<f64> = bx
        .lower
        .iter()
        .zip(&bx.upper)
        .map(|(l, u)| cfg.mutation_scale * (u - l))
        .collect();
    while !rec.done() {
        pop.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut next: Vec<(Vec<f64>, f64)> = pop[..cfg.elitism.min(pop.len())].to_vec();
        while next.len() < cfg.population && !rec.done() {
            let a = tournament(&pop, cfg.tournament, rng);
            let b = tournament(&pop, cfg.tournament, rng);
            let child: Vec<f64> = a
                .iter()
                .zip(b)
                .enumerate()
                .map(|(j, (p, q))| {
                    let (lo, hi) = (p.min(*q), p.max(*q));
                    let d = hi - lo;
                    let mut g = if d > 0.0 {
                        rng.random_range(lo - cfg.blend_alpha * d..=hi + cfg.blend_alpha * d)
                    } else {
                        lo
                    };
                    if sigma[j] > 0.0 && rng.random_bool(cfg.mutation_prob) {
                        g += Normal::new(0.0, sigma[j]).expect("positive sigma").sample(rng);
                    }
                    g
                })
                .collect();
            let child = bx.project(&child);
            let e = rec.eval(&child)?;
            next.push((child, e));
        }
        pop = next;
    }
    Ok(rec.finish(SearchMethod::Ga))
}

fn tournament<'a>(pop: &'a [(Vec<f64>, f64)], size: usize, rng: &mut Rng) -> &'a [f64] {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.1 < best.1 {
            best = c;
        }
    }
    &best.0
}
