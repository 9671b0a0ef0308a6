//! The `inverse-forge` command line.
//!
//! Every subcommand takes an optional `--config` JSON file (a [`RunConfig`]);
//! flags override file values. Exit codes: 0 success, 1 usage or
//! configuration error, 2 data or contract error.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::datagen::{build_dataset, BuildOptions, Dataset, MaskMode, Provenance};
use crate::evaluation::{
    closed_loop_eval, emit_report, evaluate_model, missing_ratio_sweep, pca_project, row_candidates, search_baseline,
    ErrorReport, EvalSettings, PcaReport, ResultFile, SearchMethod, SWEEP_RATIOS,
};
use crate::inference::{predict_designs, response, InferenceConfig, Query};
use crate::simulator::SimulatorSpec;
use crate::training::{train, train_excluding_fold, Checkpoint, ModelKind, TrainConfig};
use crate::{Error, Result};

pub const SEED_ENV: &str = "INVERSE_FORGE_SEED";

#[derive(Debug, Parser)]
#[command(name = "inverse-forge", version, about = "Single-step inverse design from partial phase diagrams")]
pub struct Cli {
    /// Worker threads for simulation and evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and save a simulator specification.
    GenSim(GenSimArgs),
    /// Build a dataset by simulating perturbed compositions.
    GenData(GenDataArgs),
    /// Train a model, holding out one fold.
    Train(TrainArgs),
    /// Predict candidate designs for a partial target.
    Predict(PredictArgs),
    /// Evaluate a checkpoint on a held-out fold.
    Eval(EvalArgs),
    /// Run a simulator-in-the-loop search baseline.
    Search(SearchArgs),
    /// Turn result files into tables, plots and a manifest.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenSimArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub phases: Option<usize>,
    /// Output JSON file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<Provenance>,
    #[arg(long)]
    pub size: Option<usize>,
    /// Simulator specification written by `gen-sim`.
    #[arg(long)]
    pub sim: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Swap the symmetric element pair on a random half of the rows.
    #[arg(long)]
    pub symmetrize: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out fold; every row is used when absent.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long, value_enum)]
    pub kind: Option<ModelKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output checkpoint directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Query JSON: `{"observed": {"PHASE@temp": value, ...}}`.
    #[arg(long)]
    pub query: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub mask_ratio: Option<f64>,
    #[arg(long, value_enum)]
    pub mask_mode: Option<MaskMode>,
    /// Test fold; should be the fold held out in training.
    #[arg(long)]
    pub fold: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulator specification; enables closed-loop re-simulation.
    #[arg(long)]
    pub sim: Option<PathBuf>,
    /// Test rows used for closed-loop checks.
    #[arg(long)]
    pub closed_loop_rows: Option<usize>,
    /// Also evaluate every mask ratio from 0.1 to 0.9.
    #[arg(long)]
    pub sweep: bool,
    /// Also project the dataset and predicted candidates onto two principal axes.
    #[arg(long)]
    pub pca: bool,
    /// Output directory for result files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<SearchMethod>,
    /// Query JSON naming the observed target cells.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub sim: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output result file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of result files.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// File form of every option. Each command reads the keys it understands
/// and ignores sections belonging to other commands.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub sim: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
    pub query: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub phases: Option<usize>,
    pub dataset: Option<DatasetSection>,
    pub train: Option<TrainConfig>,
    pub fold: Option<usize>,
    pub inference: Option<InferenceConfig>,
    pub eval: Option<EvalSection>,
    pub search: Option<SearchSection>,
    pub report_in: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub kind: Option<Provenance>,
    pub size: Option<usize>,
    pub seed: Option<u64>,
    pub symmetrize: Option<bool>,
    pub relative_perturbation: Option<f64>,
    pub search_budget: Option<usize>,
    pub per_point: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub mask_ratio: Option<f64>,
    pub mask_mode: Option<MaskMode>,
    pub fold: Option<usize>,
    pub closed_loop_rows: Option<usize>,
    pub sweep: Option<bool>,
    pub pca: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub method: Option<SearchMethod>,
    pub target: Option<PathBuf>,
    pub budget: Option<usize>,
    pub seed: Option<u64>,
}

/// Loaded config plus the raw JSON, used to tell explicit keys from defaults.
struct Loaded {
    cfg: RunConfig,
    raw: serde_json::Value,
}

impl Loaded {
    fn read(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self {
                cfg: RunConfig::default(),
                raw: serde_json::Value::Null,
            });
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg = serde_json::from_value(raw.clone()).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(Self { cfg, raw })
    }

    fn has(&self, keys: &[&str]) -> bool {
        let mut v = &self.raw;
        for k in keys {
            match v.get(k) {
                Some(next) => v = next,
                None => return false,
            }
        }
        true
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be a non-negative integer, got {s:?}"))),
        Err(_) => Ok(None),
    }
}

/// Flag, then file, then the environment fallback, then 0.
fn seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    match flag.or(file) {
        Some(s) => Ok(s),
        None => Ok(env_seed()?.unwrap_or(0)),
    }
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing --{flag} (flag or config key)")))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Error::Contract(e.to_string()))
}

fn slug(name: &str) -> String {
    name.to_ascii_lowercase()
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// 1 for usage and configuration problems, 2 for everything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        _ => 2,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    if cli.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    match &cli.command {
        Command::GenSim(a) => gen_sim(a),
        Command::GenData(a) => gen_data(a, cli.jobs),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a, cli.jobs),
        Command::Search(a) => search(a),
        Command::Report(a) => report(a),
    }
}

fn gen_sim(a: &GenSimArgs) -> Result<()> {
    let l = Loaded::read(a.config.as_deref())?;
    let out = need(a.out.clone().or(l.cfg.out), "out")?;
    let phases = a.phases.or(l.cfg.phases).unwrap_or(8);
    let spec = SimulatorSpec::generate(seed(a.seed, None)?, phases)?;
    create_parent(&out)?;
    spec.save(&out)?;
    eprintln!("wrote simulator spec ({phases} phases) to {}", out.display());
    Ok(())
}

fn gen_data(a: &GenDataArgs, jobs: usize) -> Result<()> {
    let l = Loaded::read(a.config.as_deref())?;
    let d = l.cfg.dataset.clone().unwrap_or_default();
    let sim = need(a.sim.clone().or(l.cfg.sim.clone()), "sim")?;
    let out = need(a.out.clone().or(l.cfg.out.clone()), "out")?;
    let kind = a.kind.or(d.kind).unwrap_or(Provenance::Neighborhood);
    let size = need(a.size.or(d.size), "size")?;
    let spec = SimulatorSpec::load(&sim)?;
    let mut opts = BuildOptions::new(kind, size, seed(a.seed, d.seed)?);
    opts.symmetrize = a.symmetrize || d.symmetrize.unwrap_or(false);
    if let Some(r) = d.relative_perturbation {
        opts.relative_perturbation = r;
    }
    if let Some(b) = d.search_budget {
        opts.search_budget = b;
    }
    if let Some(p) = d.per_point {
        opts.per_point = p;
    }
    opts.jobs = jobs;
    let ds = build_dataset(&spec, &opts)?;
    ds.save(&out)?;
    eprintln!("wrote {} rows to {}", ds.len(), out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let l = Loaded::read(a.config.as_deref())?;
    let data = need(a.data.clone().or(l.cfg.data.clone()), "data")?;
    let out = need(a.out.clone().or(l.cfg.out.clone()), "out")?;
    let mut cfg = l.cfg.train.clone().unwrap_or_default();
    if let Some(k) = a.kind {
        cfg.model_kind = k;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    let file_seed = l.has(&["train", "seed"]).then_some(cfg.seed);
    cfg.seed = seed(a.seed, file_seed)?;
    cfg.validate()?;
    let ds = Dataset::load(&data)?;
    let ck = match a.fold.or(l.cfg.fold) {
        Some(f) => train_excluding_fold(&cfg, &ds, f)?,
        None => train(&cfg, &ds, &(0..ds.len()).collect::<Vec<_>>())?,
    };
    ck.save(&out)?;
    eprintln!(
        "trained {} on {} rows ({} epochs, {}); checkpoint at {}",
        ck.kind().name(),
        ck.log.train_rows,
        ck.log.epochs.len(),
        ck.log.stop_reason,
        out.display()
    );
    Ok(())
}

fn inference_config(flag_n: Option<usize>, flag_seed: Option<u64>, l: &Loaded) -> Result<InferenceConfig> {
    let mut cfg = l.cfg.inference.clone().unwrap_or_default();
    if let Some(n) = flag_n {
        cfg.n = n;
    }
    let file_seed = l.has(&["inference", "seed"]).then_some(cfg.seed);
    cfg.seed = seed(flag_seed, file_seed)?;
    cfg.validate()?;
    Ok(cfg)
}

fn predict(a: &PredictArgs) -> Result<()> {
    let l = Loaded::read(a.config.as_deref())?;
    let ckpt = need(a.ckpt.clone().or(l.cfg.ckpt.clone()), "ckpt")?;
    let query = need(a.query.clone().or(l.cfg.query.clone()), "query")?;
    let cfg = inference_config(a.n, a.seed, &l)?;
    let ck = Checkpoint::load(&ckpt)?;
    let (y, hidden) = Query::load(&query)?.resolve(&ck)?;
    let candidates = predict_designs(&ck, &y, &hidden, &cfg)?;
    let text = to_json(&response(&candidates))?;
    match a.out.clone().or(l.cfg.out.clone()) {
        Some(path) => write_text(&path, &text)?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    Ok(())
}

fn eval(a: &EvalArgs, jobs: usize) -> Result<()> {
    let l = Loaded::read(a.config.as_deref())?;
    let e = l.cfg.eval.clone().unwrap_or_default();
    let ckpt = need(a.ckpt.clone().or(l.cfg.ckpt.clone()), "ckpt")?;
    let data = need(a.data.clone().or(l.cfg.data.clone()), "data")?;
    let out = need(a.out.clone().or(l.cfg.out.clone()), "out")?;
    let ratio = a.mask_ratio.or(e.mask_ratio).unwrap_or(0.0);
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!("--mask-ratio must lie in [0, 1], got {ratio}")));
    }
    let fold = a.fold.or(e.fold).or(l.cfg.fold).unwrap_or(0);
    let inference = inference_config(a.n, a.seed, &l)?;
    let settings = EvalSettings {
        mask_ratio: ratio,
        mask_mode: a.mask_mode.or(e.mask_mode).unwrap_or(MaskMode::Rows),
        inference,
        jobs,
    };
    let ck = Checkpoint::load(&ckpt)?;
    let ds = Dataset::load(&data)?;
    let name = slug(ck.kind().name());
    std::fs::create_dir_all(&out).map_err(|err| Error::io(&out, err))?;

    let f = evaluate_model(&ck, &ds, fold, &settings)?;
    let errors = ErrorReport::from_folds(ck.kind().name(), ratio, vec![f]);
    eprintln!(
        "{} mask {ratio}: relative min {:.4} mean {:.4} max {:.4}",
        errors.method, errors.relative.min.mean, errors.relative.mean.mean, errors.relative.max.mean
    );
    ResultFile::Errors(errors).save(&out.join(format!("errors-{name}-{ratio:.2}.json")))?;

    if let Some(sim) = a.sim.clone().or(l.cfg.sim.clone()) {
        let spec = SimulatorSpec::load(&sim)?;
        let (_, test) = ds.split(fold);
        let take = a.closed_loop_rows.or(e.closed_loop_rows).unwrap_or(50).min(test.len());
        let report = closed_loop_eval(&spec, &ck, &ds, &test[..take], &settings)?;
        eprintln!("closed loop over {take} queries: average phase error {:.4}", report.average);
        ResultFile::PhaseErrors(report).save(&out.join(format!("phases-{name}-{ratio:.2}.json")))?;
    }
    if a.sweep || e.sweep.unwrap_or(false) {
        let curve = missing_ratio_sweep(&ck, &ds, fold, &SWEEP_RATIOS, &settings)?;
        ResultFile::Sweep(curve).save(&out.join(format!("sweep-{name}.json")))?;
    }
    if a.pca || e.pca.unwrap_or(false) {
        let rows: Vec<Vec<f64>> = ds.compositions.iter().map(|c| c.0.to_vec()).collect();
        let pca = pca_project(&rows, 2)?;
        let (_, test) = ds.split(fold);
        let mut candidates = Vec::new();
        for r in test.iter().take(10) {
            for c in row_candidates(&ck, &ds, *r, &settings)? {
                candidates.push(pca.project(&c.0));
            }
        }
        let report = PcaReport {
            explained: pca.explained.clone(),
            dataset: pca.projected.clone(),
            candidates,
        };
        ResultFile::Pca(report).save(&out.join(format!("pca-{name}.json")))?;
    }
    Ok(())
}

fn search(a: &SearchArgs) -> Result<()> {
    let l = Loaded::read(a.config.as_deref())?;
    let s = l.cfg.search.clone().unwrap_or_default();
    let method = need(a.method.or(s.method), "method")?;
    let target = need(a.target.clone().or(s.target), "target")?;
    let budget = need(a.budget.or(s.budget), "budget")?;
    let sim = need(a.sim.clone().or(l.cfg.sim.clone()), "sim")?;
    let out = need(a.out.clone().or(l.cfg.out.clone()), "out")?;
    let spec = SimulatorSpec::load(&sim)?;
    let (y, hidden) = Query::load(&target)?.resolve_names(&spec.feature_names())?;
    if hidden.iter().all(|h| *h) {
        return Err(Error::Domain("search target observes no cells".into()));
    }
    let trace = search_baseline(method, &spec, &y, &hidden, budget, seed(a.seed, s.seed)?)?;
    eprintln!(
        "{} search: best error {:.4} after {} calls",
        method.name(),
        trace.best_error().unwrap_or(f64::NAN),
        trace.steps.len()
    );
    ResultFile::Search(trace).save(&out)
}

fn report(a: &ReportArgs) -> Result<()> {
    let l = Loaded::read(a.config.as_deref())?;
    let input = need(a.input.clone().or(l.cfg.report_in.clone()), "in")?;
    let out = need(a.out.clone().or(l.cfg.out.clone()), "out")?;
    let results = ResultFile::load_dir(&input)?;
    if results.is_empty() {
        return Err(Error::Domain(format!("no result files in {}", input.display())));
    }
    let written = emit_report(&results, &out)?;
    let mut stdout = std::io::stdout();
    for f in written {
        writeln!(stdout, "{f}").map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}
