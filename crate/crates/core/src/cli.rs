//! Experiment subcommands.
//!
//! Every subcommand reads one JSON config (a section per subcommand; all
//! fields optional), applies flag overrides and profile defaults, writes the
//! fully resolved config to `resolved_config.json` in the output directory,
//! and then writes its CSV outputs there. Sweep cells run on a local thread
//! pool but results are always collected in grid order, so outputs do not
//! depend on the worker count.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, Class2dConfig, CsvSchema, DataError, Dataset, DistributionSpec, Family, Split};
use crate::dispersion::{DispersionSpec, Shape};
use crate::learn::{
    self, BaseLoss, Examples, LearnError, LinearModel, ThresholdMode, TraceRecord, TrainConfig, TrainRisk,
};
use crate::risks::{self, EmpiricalLoss, RiskError, RiskParams};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(#[from] DataError),
    #[error("every run diverged: {0}")]
    AllDiverged(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Process exit status: 2 config, 3 data, 4 all runs diverged, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::AllDiverged(_) => 4,
            CliError::Io { .. } | CliError::Csv(_) => 1,
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<RiskError> for CliError {
    fn from(e: RiskError) -> Self {
        CliError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Reduced iteration counts and sample sizes.
    Ci,
    /// The published experiment sizes.
    #[default]
    Full,
}

#[derive(Debug, Parser)]
#[command(name = "trisk", version, about = "Threshold-risk experiments at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config with one section per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: out/<subcommand>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    /// Threads for independent sweep cells.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Static risk values before and after flipping a centered sample.
    Fliptest,
    /// Noisy, unbalanced two-class data trained by full-batch descent.
    Class2d,
    /// Regression lines on the phone-call data with and without a leverage point.
    Phones,
    /// Mini-batch averaged SGD on a small multiclass dataset.
    Bench,
    /// Evaluate a list of risks on a CSV column of losses.
    RiskEval,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fliptest => "fliptest",
            Command::Class2d => "class2d",
            Command::Phones => "phones",
            Command::Bench => "bench",
            Command::RiskEval => "risk-eval",
        }
    }
}

/// Full configuration; every section is optional in the input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub profile: Profile,
    pub workers: usize,
    pub fliptest: FliptestConfig,
    pub class2d: Class2dRunConfig,
    pub phones: PhonesConfig,
    pub bench: BenchConfig,
    pub risk_eval: RiskEvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fills every profile-dependent field that was left unset.
    pub fn resolve(mut self) -> Self {
        let ci = self.profile == Profile::Ci;
        let pick = |v: &mut Option<usize>, ci_v: usize, full_v: usize| {
            if v.is_none() {
                *v = Some(if ci { ci_v } else { full_v });
            }
        };
        pick(&mut self.fliptest.m, 1_000, 10_000);
        pick(&mut self.class2d.iterations, 1_500, 15_000);
        pick(&mut self.class2d.log_every, 10, 100);
        pick(&mut self.phones.iterations, 1_500, 15_000);
        pick(&mut self.bench.epochs, 10, 30);
        pick(&mut self.bench.trials, 3, 5);
        if self.workers == 0 {
            self.workers = 1;
        }
        self
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn shapes(values: &[f64]) -> Vec<Shape> {
    values.iter().map(|&a| Shape::new(a).expect("valid default shape")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FliptestConfig {
    pub distribution: DistributionSpec,
    /// Sample size (profile default when unset).
    pub m: Option<usize>,
    pub sigma: f64,
    pub alphas: Vec<Shape>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub a_tildes: Vec<f64>,
}

impl Default for FliptestConfig {
    fn default() -> Self {
        Self {
            distribution: DistributionSpec {
                family: Family::Lognormal { mu: 0.0, sigma: 1.0 },
                center: true,
            },
            m: None,
            sigma: 0.5,
            alphas: shapes(&linspace(0.0, 2.0, 9)),
            betas: vec![0.0, 0.25, 0.5, 0.75, 0.9],
            gammas: vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0],
            a_tildes: vec![0.1, 0.25, 0.5, 0.75],
        }
    }
}

/// Initial linear classifier `(w1, w2, bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initializer {
    pub name: String,
    pub weights: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Class2dRunConfig {
    pub data: Class2dConfig,
    pub iterations: Option<usize>,
    pub log_every: Option<usize>,
    pub step_size: f64,
    pub losses: Vec<BaseLoss>,
    pub initializers: Vec<Initializer>,
    pub alphas: Vec<Shape>,
    pub trisk_sigma: f64,
    pub trisk_eta: f64,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub a_tildes: Vec<f64>,
}

impl Default for Class2dRunConfig {
    fn default() -> Self {
        Self {
            data: Class2dConfig::default(),
            iterations: None,
            log_every: None,
            step_size: 0.01,
            losses: vec![BaseLoss::BinaryLogistic, BaseLoss::Hinge, BaseLoss::Unhinged],
            initializers: vec![
                // right of x1 = 3 is positive: the majority blob is classified correctly
                Initializer { name: "mostly_correct".into(), weights: [1.0, 0.5, -3.0] },
                // right of x1 = -2 is positive: only the minority blob is correct
                Initializer { name: "mostly_incorrect".into(), weights: [1.0, -0.5, 2.0] },
            ],
            alphas: shapes(&linspace(1.0, 2.0, 5)),
            trisk_sigma: 1.0,
            trisk_eta: 0.5,
            betas: linspace(0.025, 0.75, 5),
            gammas: linspace(-0.05, 0.05, 5),
            a_tildes: linspace(0.025, 0.35, 5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhonesConfig {
    pub iterations: Option<usize>,
    pub step_size: f64,
    pub alphas: Vec<Shape>,
    pub eta: f64,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub a_tildes: Vec<f64>,
    /// Years (two-digit) whose points define the initial line by least squares.
    pub init_years: (f64, f64),
}

impl Default for PhonesConfig {
    fn default() -> Self {
        let mut alphas = vec![f64::NEG_INFINITY];
        alphas.extend(linspace(-4.0, 2.0, 19));
        Self {
            iterations: None,
            step_size: 0.005,
            alphas: shapes(&alphas),
            eta: 1.0,
            betas: linspace(0.025, 0.75, 5),
            gammas: linspace(-0.05, 0.05, 5),
            a_tildes: linspace(0.025, 0.35, 5),
            init_years: (50.0, 63.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenchData {
    /// The embedded 8x8 digits table.
    Digits,
    Csv { path: PathBuf, schema: CsvSchema },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub data: BenchData,
    pub split: (f64, f64, f64),
    pub epochs: Option<usize>,
    pub trials: Option<usize>,
    pub batch_size: usize,
    /// Step sizes are `c / sqrt(k d)` for each factor `c`.
    pub step_factors: Vec<f64>,
    pub alphas: Vec<Shape>,
    pub sigma: f64,
    pub eta: f64,
    pub histogram_bins: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            data: BenchData::Digits,
            split: (0.8, 0.1, 0.1),
            epochs: None,
            trials: None,
            batch_size: 32,
            step_factors: vec![0.5, 2.0, 8.0, 32.0, 128.0],
            alphas: shapes(&linspace(1.0, 2.0, 5)),
            // just under 1/eta, so alpha = 1 keeps a finite optimal threshold
            sigma: 0.99,
            eta: 1.0,
            histogram_bins: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskEvalConfig {
    /// Headed CSV of losses.
    pub input: Option<PathBuf>,
    /// Column holding the losses (default: the first).
    pub column: Option<String>,
    pub risks: Vec<RiskParams>,
}

impl Default for RiskEvalConfig {
    fn default() -> Self {
        Self {
            input: None,
            column: None,
            risks: vec![RiskParams::CVaR { beta: 0.5 }],
        }
    }
}

/// Parses arguments and runs the subcommand; returns the output directory.
pub fn run<I, T>(args: I) -> Result<PathBuf>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Config(e.to_string()))?;
    run_parsed(&cli)
}

/// Runs already parsed arguments; returns the output directory.
pub fn run_parsed(cli: &Cli) -> Result<PathBuf> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(profile) = cli.profile {
        config.profile = profile;
    }
    if let Some(workers) = cli.workers {
        config.workers = workers;
    }
    let config = config.resolve();
    let out = cli.out.clone().unwrap_or_else(|| Path::new("out").join(cli.command.name()));
    execute(cli.command, &config, &out)?;
    Ok(out)
}

/// Runs `command` with an already resolved config, writing into `out`.
pub fn execute(command: Command, config: &RunConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    let snapshot = serde_json::to_string_pretty(config).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&out.join("resolved_config.json"), snapshot.as_bytes())?;
    match command {
        Command::Fliptest => cmd_fliptest(config, out).map(drop),
        Command::Class2d => cmd_class2d(config, out).map(drop),
        Command::Phones => cmd_phones(config, out).map(drop),
        Command::Bench => cmd_bench(config, out).map(drop),
        Command::RiskEval => cmd_risk_eval(config, out).map(drop),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io { path: path.into(), source: e.into_error() })?;
    write_file(path, &bytes)
}

fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut buf = Vec::new();
    learn::write_trace_csv(trace, &mut buf)?;
    write_file(path, &buf)
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Maps `f` over `items` on `workers` threads, preserving order.
fn par_map<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}

/// Rows of one fliptest output file.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipRow {
    pub param: String,
    pub eta: Option<f64>,
    pub quantity: &'static str,
    /// `None` when the risk is unbounded below for this parameter.
    pub value: Option<f64>,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FliptestReport {
    pub trisk: Vec<FlipRow>,
    pub m_location: Vec<FlipRow>,
    pub cvar: Vec<FlipRow>,
    pub tilted: Vec<FlipRow>,
    pub dro: Vec<FlipRow>,
}

/// Risk values of a centered sample `L` and of `-L` over each family's grid.
pub fn cmd_fliptest(config: &RunConfig, out: &Path) -> Result<FliptestReport> {
    let c = &config.fliptest;
    let m = c.m.unwrap_or(10_000);
    let sample = data::sample(&c.distribution, m, config.seed)?;
    let samples = [(false, sample.clone()), (true, sample.negated())];
    let mut report = FliptestReport { trisk: vec![], m_location: vec![], cvar: vec![], tilted: vec![], dro: vec![] };
    let row = |param: String, eta: Option<f64>, quantity, value, flipped| FlipRow { param, eta, quantity, value, flipped };
    for (flipped, s) in &samples {
        for &alpha in &c.alphas {
            let spec = DispersionSpec::with_shape(alpha, c.sigma).map_err(RiskError::from)?;
            for eta in [1.0, -1.0] {
                match risks::minimal_trisk(s, &spec, eta) {
                    Ok(r) => {
                        report.trisk.push(row(alpha.to_string(), Some(eta), "value", Some(r.value), *flipped));
                        report.trisk.push(row(alpha.to_string(), Some(eta), "threshold", Some(r.theta_star), *flipped));
                    }
                    Err(RiskError::UnboundedBelow { .. }) => {
                        report.trisk.push(row(alpha.to_string(), Some(eta), "value", None, *flipped));
                        report.trisk.push(row(alpha.to_string(), Some(eta), "threshold", None, *flipped));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let loc = risks::m_location(s, &spec)?;
            report.m_location.push(row(alpha.to_string(), None, "threshold", Some(loc), *flipped));
            let value = loc + risks::dispersion_mean(s, &spec, loc);
            report.m_location.push(row(alpha.to_string(), None, "value", Some(value), *flipped));
        }
        for &beta in &c.betas {
            report.cvar.push(row(num(beta), None, "threshold", Some(risks::quantile(s, beta)?), *flipped));
            report.cvar.push(row(num(beta), None, "value", Some(risks::cvar(s, beta)?), *flipped));
        }
        for &gamma in &c.gammas {
            report.tilted.push(row(num(gamma), None, "value", Some(risks::tilted(s, gamma)?), *flipped));
        }
        for &a in &c.a_tildes {
            report.dro.push(row(num(a), None, "value", Some(risks::dro_risk(s, 2.0, a)?), *flipped));
        }
    }
    let files: [(&str, &str, &Vec<FlipRow>); 5] = [
        ("trisk.csv", "alpha", &report.trisk),
        ("m_location.csv", "alpha", &report.m_location),
        ("cvar.csv", "beta", &report.cvar),
        ("tilted.csv", "gamma", &report.tilted),
        ("dro.csv", "a_tilde", &report.dro),
    ];
    for (name, param, rows) in files {
        let with_eta = rows.iter().any(|r| r.eta.is_some());
        let mut header = vec![param];
        if with_eta {
            header.push("eta");
        }
        header.extend(["quantity", "value", "flipped"]);
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                let mut rec = vec![r.param.clone()];
                if with_eta {
                    rec.push(r.eta.map_or_else(String::new, num));
                }
                rec.push(r.quantity.into());
                rec.push(r.value.map_or_else(|| "unbounded".into(), num));
                rec.push(u8::from(r.flipped).to_string());
                rec
            })
            .collect();
        write_rows(&out.join(name), &header, &body)?;
    }
    Ok(report)
}

/// Outcome of one training run in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub family: &'static str,
    /// Position in the family's grid (0 for baselines).
    pub index: usize,
    pub param: f64,
    pub model: Option<LinearModel>,
    pub theta: f64,
    pub trace: Vec<TraceRecord>,
    pub diverged: bool,
}

impl RunOutcome {
    pub fn final_record(&self) -> Option<&TraceRecord> {
        if self.diverged {
            None
        } else {
            self.trace.last()
        }
    }
}

/// Sweep cells: `(family, index, parameter, risk)`.
fn sweep_cells(
    alphas: &[Shape],
    sigma: f64,
    eta: f64,
    betas: &[f64],
    gammas: &[f64],
    a_tildes: &[f64],
) -> Result<Vec<(&'static str, usize, f64, TrainRisk)>> {
    let mut cells = Vec::new();
    for (i, &a) in alphas.iter().enumerate() {
        let spec = DispersionSpec::with_shape(a, sigma).map_err(|e| CliError::Config(e.to_string()))?;
        cells.push(("trisk", i, a.as_f64(), TrainRisk::TRisk { spec, eta }));
    }
    for (i, &beta) in betas.iter().enumerate() {
        cells.push(("cvar", i, beta, TrainRisk::Cvar { beta }));
    }
    for (i, &gamma) in gammas.iter().enumerate() {
        // the grid may straddle zero; gamma = 0 is the mean, i.e. ERM
        let risk = if gamma == 0.0 { TrainRisk::Erm } else { TrainRisk::Tilted { gamma } };
        cells.push(("tilted", i, gamma, risk));
    }
    for (i, &a_tilde) in a_tildes.iter().enumerate() {
        cells.push(("dro", i, a_tilde, TrainRisk::Dro { c: 2.0, a_tilde }));
    }
    for (_, _, _, risk) in &cells {
        risk.validate()?;
    }
    Ok(cells)
}

/// Index of the run with the smallest final error; ties go to the smaller parameter.
pub fn select_representative(runs: &[&RunOutcome]) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, r) in runs.iter().enumerate() {
        let Some(rec) = r.final_record() else { continue };
        let better = match best {
            None => true,
            Some((_, err, param)) => rec.error < err || (rec.error == err && r.param < param),
        };
        if better {
            best = Some((i, rec.error, r.param));
        }
    }
    best.map(|(i, _, _)| i)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Class2dGroup {
    pub loss: BaseLoss,
    pub init: String,
    pub erm: RunOutcome,
    pub runs: Vec<RunOutcome>,
    /// Representative run index (into `runs`) per family.
    pub representatives: Vec<(&'static str, Option<usize>)>,
}

impl Class2dGroup {
    pub fn representative(&self, family: &str) -> Option<&RunOutcome> {
        self.representatives
            .iter()
            .find(|(f, _)| *f == family)
            .and_then(|(_, i)| i.map(|i| &self.runs[i]))
    }
}

fn train_outcome(
    family: &'static str,
    index: usize,
    param: f64,
    examples: &Examples,
    model0: &LinearModel,
    base: BaseLoss,
    cfg: &TrainConfig,
) -> std::result::Result<RunOutcome, LearnError> {
    match learn::train_full_batch_gd(examples, model0, base, cfg) {
        Ok(res) => Ok(RunOutcome {
            family,
            index,
            param,
            model: Some(res.model),
            theta: res.theta,
            trace: res.trace,
            diverged: false,
        }),
        Err(LearnError::Diverged { step }) => {
            log::warn!("{family}[{index}] with {base} loss diverged at step {step}");
            Ok(RunOutcome { family, index, param, model: None, theta: f64::NAN, trace: vec![], diverged: true })
        }
        Err(e) => Err(e),
    }
}

/// Full-batch descent on the noisy planar data for every loss, initializer
/// and risk setting.
pub fn cmd_class2d(config: &RunConfig, out: &Path) -> Result<Vec<Class2dGroup>> {
    let c = &config.class2d;
    let data = data::gen_class2d(&c.data, config.seed)?;
    let examples = data.dataset.examples().with_intercept();
    let cells = sweep_cells(&c.alphas, c.trisk_sigma, c.trisk_eta, &c.betas, &c.gammas, &c.a_tildes)?;
    let iterations = c.iterations.unwrap_or(15_000);
    let log_every = c.log_every.unwrap_or(100).max(1);

    let mut jobs = Vec::new();
    for &loss in &c.losses {
        if loss == BaseLoss::Quadratic || loss == BaseLoss::MulticlassLogistic {
            return Err(CliError::Config(format!("class2d needs a binary loss, got {loss}")));
        }
        for init in &c.initializers {
            jobs.push((loss, init, "erm", 0, f64::NAN, TrainRisk::Erm));
            for &(family, index, param, risk) in &cells {
                jobs.push((loss, init, family, index, param, risk));
            }
        }
    }
    let results = par_map(config.workers, &jobs, |&(loss, init, family, index, param, risk)| {
        let model0 = LinearModel::vector(init.weights.to_vec())?;
        let mut cfg = TrainConfig::full_batch(risk, iterations, c.step_size);
        cfg.log_every = log_every;
        train_outcome(family, index, param, &examples, &model0, loss, &cfg)
    })?;

    let traces = out.join("traces");
    let baselines = out.join("baselines");
    create_dir(&traces)?;
    create_dir(&baselines)?;
    let mut groups: Vec<Class2dGroup> = Vec::new();
    let mut summary = Vec::new();
    let mut results = results.into_iter();
    for &loss in &c.losses {
        for init in &c.initializers {
            let erm = results.next().expect("one result per job")?;
            let runs: Vec<RunOutcome> = (0..cells.len())
                .map(|_| results.next().expect("one result per job"))
                .collect::<std::result::Result<_, _>>()?;
            let mut representatives = Vec::new();
            for family in ["trisk", "cvar", "tilted", "dro"] {
                let idx: Vec<usize> = (0..runs.len()).filter(|&i| runs[i].family == family).collect();
                let members: Vec<&RunOutcome> = idx.iter().map(|&i| &runs[i]).collect();
                representatives.push((family, select_representative(&members).map(|j| idx[j])));
            }
            write_trace(&baselines.join(format!("{loss}_{}_erm.csv", init.name)), &erm.trace)?;
            for r in &runs {
                write_trace(&traces.join(format!("{loss}_{}_{}_{}.csv", init.name, r.family, r.index)), &r.trace)?;
            }
            let group = Class2dGroup { loss, init: init.name.clone(), erm, runs, representatives };
            for (i, r) in std::iter::once(&group.erm).chain(&group.runs).enumerate() {
                let is_rep = i > 0 && group.representatives.iter().any(|(_, j)| *j == Some(i - 1));
                let rec = r.final_record();
                summary.push(vec![
                    loss.to_string(),
                    init.name.clone(),
                    r.family.into(),
                    num(r.param),
                    rec.map_or_else(String::new, |t| num(t.error)),
                    rec.map_or_else(String::new, |t| num(t.weight_norm)),
                    rec.map_or_else(String::new, |t| num(t.objective)),
                    u8::from(r.diverged).to_string(),
                    u8::from(is_rep).to_string(),
                ]);
            }
            groups.push(group);
        }
    }
    write_rows(
        &out.join("summary.csv"),
        &["loss", "init", "family", "param", "final_error", "final_weight_norm", "final_objective", "diverged", "representative"],
        &summary,
    )?;
    let all = groups.iter().flat_map(|g| std::iter::once(&g.erm).chain(&g.runs));
    if all.clone().all(|r| r.diverged) {
        return Err(CliError::AllDiverged("class2d".into()));
    }
    Ok(groups)
}

/// Fitted lines for one phones dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PhonesLines {
    pub high_leverage: bool,
    pub dataset: Dataset,
    /// Least-squares line on the initialization years: `(slope, intercept)`.
    pub init: (f64, f64),
    /// Ordinary least squares on all points.
    pub ols: (f64, f64),
    /// `theta = sigma` for the T-risk runs: median initial squared loss.
    pub theta: f64,
    pub erm: RunOutcome,
    pub runs: Vec<RunOutcome>,
}

impl PhonesLines {
    /// `(slope, intercept)` of a run, if it did not diverge.
    pub fn line(run: &RunOutcome) -> Option<(f64, f64)> {
        run.model.as_ref().map(|m| (m.weights()[0], m.weights()[1]))
    }
}

/// Least-squares `(slope, intercept)` on the given rows.
pub fn least_squares_line(examples: &Examples, rows: &[usize]) -> Result<(f64, f64)> {
    let n = rows.len() as f64;
    if rows.len() < 2 {
        return Err(CliError::Config("least squares needs two points".into()));
    }
    let mx = rows.iter().map(|&i| examples.row(i)[0]).sum::<f64>() / n;
    let my = rows.iter().map(|&i| examples.target(i)).sum::<f64>() / n;
    let sxy: f64 = rows.iter().map(|&i| (examples.row(i)[0] - mx) * (examples.target(i) - my)).sum();
    let sxx: f64 = rows.iter().map(|&i| (examples.row(i)[0] - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(CliError::Config("least squares with constant inputs".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Regression lines on the phones data under each risk, from a common start.
pub fn cmd_phones(config: &RunConfig, out: &Path) -> Result<Vec<PhonesLines>> {
    let c = &config.phones;
    let iterations = c.iterations.unwrap_or(15_000);
    let table = data::phones_table()?;
    let init_rows: Vec<usize> = (0..table.len())
        .filter(|&i| table[i].year >= c.init_years.0 && table[i].year <= c.init_years.1)
        .collect();
    let mut all = Vec::new();
    for high_leverage in [false, true] {
        let dataset = data::load_phones(high_leverage)?;
        let raw = dataset.examples().clone();
        let examples = raw.with_intercept();
        let init = least_squares_line(&raw, &init_rows)?;
        let ols = least_squares_line(&raw, &(0..raw.len()).collect::<Vec<_>>())?;
        let model0 = LinearModel::vector(vec![init.0, init.1])?;
        let mut losses = learn::base_losses(&model0, &examples, BaseLoss::Quadratic)?;
        let theta = median(&mut losses);
        if !(theta > 0.0) {
            return Err(CliError::Config("median initial loss must be positive to serve as a scale".into()));
        }
        let mut cells = Vec::new();
        for (i, &a) in c.alphas.iter().enumerate() {
            let spec = DispersionSpec::with_shape(a, theta).map_err(|e| CliError::Config(e.to_string()))?;
            cells.push(("trisk", i, a.as_f64(), TrainRisk::TRisk { spec, eta: c.eta }, Some(theta)));
        }
        for (family, i, p, risk) in sweep_cells(&[], 1.0, 0.0, &c.betas, &c.gammas, &c.a_tildes)? {
            cells.push((family, i, p, risk, None));
        }
        cells.insert(0, ("erm", 0, f64::NAN, TrainRisk::Erm, None));
        let results = par_map(config.workers, &cells, |&(family, index, param, risk, fixed)| {
            let mut cfg = TrainConfig::full_batch(risk, iterations, c.step_size);
            cfg.log_every = iterations.max(1);
            if let Some(theta) = fixed {
                cfg.threshold_mode = ThresholdMode::Fixed { theta };
            }
            train_outcome(family, index, param, &examples, &model0, BaseLoss::Quadratic, &cfg)
        })?;
        let mut results: Vec<RunOutcome> = results.into_iter().collect::<std::result::Result<_, _>>()?;
        let erm = results.remove(0);
        let tag = if high_leverage { "high_leverage" } else { "original" };
        let mut rows = vec![
            vec!["init".into(), String::new(), num(init.0), num(init.1), "0".into()],
            vec!["ols".into(), String::new(), num(ols.0), num(ols.1), "0".into()],
        ];
        for r in std::iter::once(&erm).chain(&results) {
            let (slope, intercept) = PhonesLines::line(r).map_or((String::new(), String::new()), |(s, b)| (num(s), num(b)));
            let param = if r.family == "erm" { String::new() } else { num(r.param) };
            rows.push(vec![r.family.into(), param, slope, intercept, u8::from(r.diverged).to_string()]);
        }
        write_rows(&out.join(format!("lines_{tag}.csv")), &["family", "param", "slope", "intercept", "diverged"], &rows)?;
        let mut ds_csv = Vec::new();
        dataset.write_csv(&mut ds_csv)?;
        write_file(&out.join(format!("data_{tag}.csv")), &ds_csv)?;
        all.push(PhonesLines { high_leverage, dataset, init, ols, theta, erm, runs: results });
    }
    if all.iter().flat_map(|p| std::iter::once(&p.erm).chain(&p.runs)).all(|r| r.diverged) {
        return Err(CliError::AllDiverged("phones".into()));
    }
    Ok(all)
}

/// Spearman rank correlation (average ranks for ties); `NaN` if either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = 0.5 * (i + j) as f64 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Per-epoch test statistics of one selected run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub test_loss_mean: f64,
    pub test_loss_std: f64,
    pub test_zero_one: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSetting {
    /// `erm`, `mean_variance`, or `trisk`.
    pub family: &'static str,
    /// Shape for T-risk settings, `NaN` otherwise.
    pub alpha: f64,
    pub step_size: f64,
    /// One entry per trial; empty when every step size diverged.
    pub epochs: Vec<Vec<EpochStats>>,
    /// Final averaged model's test losses for trial 0.
    pub final_test_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub settings: Vec<BenchSetting>,
    /// Per trial: Spearman correlation of alpha with final test-loss (std, mean).
    pub trend: Vec<(f64, f64)>,
}

fn loss_stats(losses: &[f64]) -> (f64, f64) {
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct BenchRun {
    val_loss: f64,
    epochs: Vec<EpochStats>,
    final_test_losses: Vec<f64>,
}

/// Mini-batch averaged SGD over T-risk shapes plus ERM and mean-variance
/// references; step sizes are chosen per setting by final validation loss.
pub fn cmd_bench(config: &RunConfig, out: &Path) -> Result<BenchReport> {
    let c = &config.bench;
    let epochs = c.epochs.unwrap_or(30);
    let trials = c.trials.unwrap_or(5);
    if trials == 0 || epochs == 0 || c.step_factors.is_empty() || c.histogram_bins == 0 {
        return Err(CliError::Config("bench needs trials, epochs, step factors and bins".into()));
    }
    let datasets: Vec<Dataset> = (0..trials)
        .map(|t| {
            let seed = config.seed.wrapping_add(t as u64);
            match &c.data {
                BenchData::Digits => data::load_digits(c.split, seed),
                BenchData::Csv { path, schema } => data::load_csv(path, schema, c.split, seed),
            }
        })
        .collect::<std::result::Result<_, _>>()?;
    let k = datasets[0]
        .classes()
        .ok_or_else(|| CliError::Config("bench needs a multiclass target".into()))?;
    let parts: Vec<[Examples; 3]> = datasets
        .iter()
        .map(|d| [Split::Train, Split::Val, Split::Test].map(|s| d.part(s).with_intercept()))
        .collect();
    if parts.iter().any(|p| p.iter().any(Examples::is_empty)) {
        return Err(DataError::Schema("every split needs at least one row".into()).into());
    }
    let d = parts[0][0].dim();
    let steps: Vec<f64> = c.step_factors.iter().map(|f| f / ((k * d) as f64).sqrt()).collect();

    let mut settings: Vec<(&'static str, f64, TrainRisk)> = vec![("erm", f64::NAN, TrainRisk::Erm), ("mean_variance", f64::NAN, TrainRisk::MeanVariance)];
    for &a in &c.alphas {
        let spec = DispersionSpec::with_shape(a, c.sigma).map_err(|e| CliError::Config(e.to_string()))?;
        settings.push(("trisk", a.as_f64(), TrainRisk::TRisk { spec, eta: c.eta }));
    }
    let mut jobs = Vec::new();
    for (s, _) in settings.iter().enumerate() {
        for (j, _) in steps.iter().enumerate() {
            for t in 0..trials {
                jobs.push((s, j, t));
            }
        }
    }
    let results = par_map(config.workers, &jobs, |&(s, j, t)| -> std::result::Result<Option<BenchRun>, CliError> {
        let [train, val, test] = &parts[t];
        let seed = rand::Rng::random::<u64>(&mut data::substream(config.seed, &format!("bench/trial{t}")));
        let cfg = TrainConfig::minibatch(settings[s].2, epochs, c.batch_size, steps[j], seed);
        let run = match learn::train_minibatch_avg(train, &LinearModel::zeros(k, d), BaseLoss::MulticlassLogistic, &cfg) {
            Ok(run) => run,
            Err(LearnError::Diverged { .. }) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut stats = Vec::with_capacity(epochs);
        let averages = run.running_averages();
        for (e, (model, _)) in averages.iter().enumerate() {
            let losses = learn::base_losses(model, test, BaseLoss::MulticlassLogistic)?;
            let (mean, std) = loss_stats(&losses);
            stats.push(EpochStats {
                epoch: e + 1,
                test_loss_mean: mean,
                test_loss_std: std,
                test_zero_one: learn::error_rate(model, test, BaseLoss::MulticlassLogistic)?,
            });
        }
        let val_losses = learn::base_losses(&run.model, val, BaseLoss::MulticlassLogistic)?;
        let final_test_losses = learn::base_losses(&run.model, test, BaseLoss::MulticlassLogistic)?;
        let val_loss = loss_stats(&val_losses).0;
        if !val_loss.is_finite() {
            return Ok(None);
        }
        Ok(Some(BenchRun { val_loss, epochs: stats, final_test_losses }))
    })?;
    let mut results = results.into_iter();
    let mut grid: Vec<Vec<Vec<Option<BenchRun>>>> = Vec::new();
    for _ in &settings {
        let mut per_step = Vec::new();
        for _ in &steps {
            per_step.push((0..trials).map(|_| results.next().expect("one per job")).collect::<Result<Vec<_>>>()?);
        }
        grid.push(per_step);
    }

    let mut report = BenchReport { settings: vec![], trend: vec![] };
    let mut epoch_rows = Vec::new();
    let mut selection_rows = Vec::new();
    for (s, (family, alpha, _)) in settings.iter().enumerate() {
        // mean final validation loss over trials; a step size with any diverged trial is out
        let mut best: Option<(usize, f64)> = None;
        for (j, runs) in grid[s].iter().enumerate() {
            let score = if runs.iter().all(Option::is_some) {
                runs.iter().map(|r| r.as_ref().map_or(f64::NAN, |r| r.val_loss)).sum::<f64>() / trials as f64
            } else {
                f64::NAN
            };
            selection_rows.push(vec![family.to_string(), num(*alpha), num(steps[j]), num(score)]);
            if score.is_finite() && best.is_none_or(|(_, b)| score < b) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else {
            report.settings.push(BenchSetting { family, alpha: *alpha, step_size: f64::NAN, epochs: vec![], final_test_losses: vec![] });
            continue;
        };
        let runs: Vec<&BenchRun> = grid[s][j].iter().map(|r| r.as_ref().expect("all trials finite")).collect();
        for (t, r) in runs.iter().enumerate() {
            for e in &r.epochs {
                epoch_rows.push(vec![
                    family.to_string(),
                    num(*alpha),
                    t.to_string(),
                    e.epoch.to_string(),
                    num(e.test_loss_mean),
                    num(e.test_loss_std),
                    num(e.test_zero_one),
                ]);
            }
        }
        report.settings.push(BenchSetting {
            family,
            alpha: *alpha,
            step_size: steps[j],
            epochs: runs.iter().map(|r| r.epochs.clone()).collect(),
            final_test_losses: runs[0].final_test_losses.clone(),
        });
    }
    write_rows(&out.join("step_selection.csv"), &["family", "alpha", "step_size", "mean_val_loss"], &selection_rows)?;
    write_rows(
        &out.join("epochs.csv"),
        &["family", "alpha", "trial", "epoch", "test_loss_mean", "test_loss_std", "test_zero_one"],
        &epoch_rows,
    )?;

    // shared histogram bins over every setting's final test losses
    let finished: Vec<&BenchSetting> = report.settings.iter().filter(|s| !s.final_test_losses.is_empty()).collect();
    if finished.is_empty() {
        return Err(CliError::AllDiverged("bench".into()));
    }
    let top = finished.iter().flat_map(|s| s.final_test_losses.iter().copied()).fold(0.0, f64::max);
    let width = if top > 0.0 { top / c.histogram_bins as f64 } else { 1.0 };
    let mut hist_rows = Vec::new();
    for s in &finished {
        let mut counts = vec![0usize; c.histogram_bins];
        for &l in &s.final_test_losses {
            counts[((l / width) as usize).min(c.histogram_bins - 1)] += 1;
        }
        for (b, count) in counts.iter().enumerate() {
            hist_rows.push(vec![s.family.into(), num(s.alpha), num(b as f64 * width), num((b + 1) as f64 * width), count.to_string()]);
        }
    }
    write_rows(&out.join("histogram.csv"), &["family", "alpha", "bin_lo", "bin_hi", "count"], &hist_rows)?;

    let trisk: Vec<&BenchSetting> = report.settings.iter().filter(|s| s.family == "trisk" && !s.epochs.is_empty()).collect();
    let mut trend_rows = Vec::new();
    if trisk.len() >= 2 {
        let alphas: Vec<f64> = trisk.iter().map(|s| s.alpha).collect();
        for t in 0..trials {
            let last = |s: &BenchSetting| s.epochs[t].last().cloned().expect("epochs > 0");
            let stds: Vec<f64> = trisk.iter().map(|s| last(s).test_loss_std).collect();
            let means: Vec<f64> = trisk.iter().map(|s| last(s).test_loss_mean).collect();
            let pair = (spearman(&alphas, &stds), spearman(&alphas, &means));
            trend_rows.push(vec![t.to_string(), num(pair.0), num(pair.1)]);
            report.trend.push(pair);
        }
    }
    write_rows(&out.join("trend.csv"), &["trial", "spearman_alpha_std", "spearman_alpha_mean"], &trend_rows)?;
    Ok(report)
}

/// Evaluates each configured risk on a column of losses.
pub fn cmd_risk_eval(config: &RunConfig, out: &Path) -> Result<Vec<(RiskParams, f64)>> {
    let c = &config.risk_eval;
    let input = c.input.as_ref().ok_or_else(|| CliError::Config("risk_eval.input is required".into()))?;
    let file = fs::File::open(input).map_err(|e| DataError::Schema(format!("{}: {e}", input.display())))?;
    let losses = read_loss_column(file, c.column.as_deref())?;
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for params in &c.risks {
        let value = risks::risk_eval(&losses, params)?;
        let json = serde_json::to_string(params).map_err(|e| CliError::Config(e.to_string()))?;
        rows.push(vec![params.family().into(), json, num(value)]);
        results.push((*params, value));
    }
    write_rows(&out.join("risk_eval.csv"), &["family", "params", "value"], &rows)?;
    Ok(results)
}

/// Reads one column of a headed CSV as a loss sample.
pub fn read_loss_column<R: std::io::Read>(input: R, column: Option<&str>) -> Result<EmpiricalLoss> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(DataError::from)?.clone();
    let col = match column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Schema(format!("column {name:?} not found")))?,
        None => 0,
    };
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(DataError::from)?;
        let field = rec.get(col).unwrap_or("");
        let v: f64 = field.trim().parse().map_err(|e: std::num::ParseFloatError| DataError::Parse {
            row: i + 1,
            column: header.get(col).unwrap_or("").into(),
            reason: e.to_string(),
        })?;
        values.push(v);
    }
    EmpiricalLoss::new(values).map_err(|e| DataError::from(e).into())
}
