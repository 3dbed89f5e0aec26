//! Seeded samplers and the datasets used by the experiments.
//!
//! All randomness comes from ChaCha8 (a counter-based stream cipher, so a
//! given seed yields the same stream on every platform). Independent
//! purposes draw from substreams keyed by `(seed, tag)`; see [`substream`].

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::distr::{Bernoulli, Distribution, Uniform};
use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, ChiSquared, Exp, Gamma, InverseGaussian, LogNormal, Normal, Pareto, StudentT, Weibull};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learn::{Examples, LearnError};
use crate::risks::{EmpiricalLoss, RiskError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid {family} parameters: {reason}")]
    InvalidParameters { family: &'static str, reason: String },
    #[error("parse error at row {row}, column {column}: {reason}")]
    Parse { row: usize, column: String, reason: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("missing embedded table: {0}")]
    MissingTable(&'static str),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Generator for the substream `tag` of `seed`.
///
/// The key is `splitmix64(seed ^ fnv1a64(tag))`, so every (seed, tag) pair
/// maps to an unrelated ChaCha8 stream.
pub fn substream(seed: u64, tag: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = (seed ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Parametric loss distribution for the static risk experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Bernoulli { p: f64 },
    Beta { a: f64, b: f64 },
    Chi2 { k: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Normal { mean: f64, sd: f64 },
    /// Density `shape * scale^shape / x^(shape + 1)` on `x >= scale`.
    Pareto { shape: f64, scale: f64 },
    Uniform { low: f64, high: f64 },
    /// Inverse Gaussian with the given mean and shape.
    Wald { mean: f64, shape: f64 },
    Weibull { shape: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    #[serde(flatten)]
    pub family: Family,
    /// Subtract the analytic mean from every draw.
    #[serde(default)]
    pub center: bool,
}

fn bad(family: &'static str, reason: impl Into<String>) -> DataError {
    DataError::InvalidParameters { family, reason: reason.into() }
}

fn positive(family: &'static str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(family, format!("{name} must be positive and finite, got {v}")))
    }
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Bernoulli { .. } => "bernoulli",
            Family::Beta { .. } => "beta",
            Family::Chi2 { .. } => "chi2",
            Family::Exponential { .. } => "exponential",
            Family::Gamma { .. } => "gamma",
            Family::Lognormal { .. } => "lognormal",
            Family::Normal { .. } => "normal",
            Family::Pareto { .. } => "pareto",
            Family::Uniform { .. } => "uniform",
            Family::Wald { .. } => "wald",
            Family::Weibull { .. } => "weibull",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.name();
        match *self {
            Family::Bernoulli { p } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(bad(n, format!("p must lie in [0, 1], got {p}")))
                }
            }
            Family::Beta { a, b } => positive(n, "a", a).and(positive(n, "b", b)),
            Family::Chi2 { k } => positive(n, "k", k),
            Family::Exponential { rate } => positive(n, "rate", rate),
            Family::Gamma { shape, scale } => positive(n, "shape", shape).and(positive(n, "scale", scale)),
            Family::Lognormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(bad(n, "mu must be finite"));
                }
                positive(n, "sigma", sigma)
            }
            Family::Normal { mean, sd } => {
                if !mean.is_finite() {
                    return Err(bad(n, "mean must be finite"));
                }
                positive(n, "sd", sd)
            }
            Family::Pareto { shape, scale } => positive(n, "shape", shape).and(positive(n, "scale", scale)),
            Family::Uniform { low, high } => {
                if low.is_finite() && high.is_finite() && low < high {
                    Ok(())
                } else {
                    Err(bad(n, format!("need low < high, got [{low}, {high}]")))
                }
            }
            Family::Wald { mean, shape } => positive(n, "mean", mean).and(positive(n, "shape", shape)),
            Family::Weibull { shape, scale } => positive(n, "shape", shape).and(positive(n, "scale", scale)),
        }
    }

    /// Analytic mean; infinite for Pareto with shape `<= 1`.
    pub fn mean(&self) -> f64 {
        match *self {
            Family::Bernoulli { p } => p,
            Family::Beta { a, b } => a / (a + b),
            Family::Chi2 { k } => k,
            Family::Exponential { rate } => 1.0 / rate,
            Family::Gamma { shape, scale } => shape * scale,
            Family::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            Family::Normal { mean, .. } => mean,
            Family::Pareto { shape, scale } => {
                if shape > 1.0 {
                    shape * scale / (shape - 1.0)
                } else {
                    f64::INFINITY
                }
            }
            Family::Uniform { low, high } => 0.5 * (low + high),
            Family::Wald { mean, .. } => mean,
            Family::Weibull { shape, scale } => scale * libm::tgamma(1.0 + 1.0 / shape),
        }
    }

    /// Analytic variance; infinite where it does not exist.
    pub fn variance(&self) -> f64 {
        match *self {
            Family::Bernoulli { p } => p * (1.0 - p),
            Family::Beta { a, b } => a * b / ((a + b).powi(2) * (a + b + 1.0)),
            Family::Chi2 { k } => 2.0 * k,
            Family::Exponential { rate } => 1.0 / (rate * rate),
            Family::Gamma { shape, scale } => shape * scale * scale,
            Family::Lognormal { mu, sigma } => {
                let s2 = sigma * sigma;
                s2.exp_m1() * (2.0 * mu + s2).exp()
            }
            Family::Normal { sd, .. } => sd * sd,
            Family::Pareto { shape, scale } => {
                if shape > 2.0 {
                    scale * scale * shape / ((shape - 1.0).powi(2) * (shape - 2.0))
                } else {
                    f64::INFINITY
                }
            }
            Family::Uniform { low, high } => (high - low).powi(2) / 12.0,
            Family::Wald { mean, shape } => mean.powi(3) / shape,
            Family::Weibull { shape, scale } => {
                let g1 = libm::tgamma(1.0 + 1.0 / shape);
                scale * scale * (libm::tgamma(1.0 + 2.0 / shape) - g1 * g1)
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng, m: usize) -> Result<Vec<f64>> {
        let n = self.name();
        let err = |e: &dyn std::fmt::Display| bad(n, e.to_string());
        Ok(match *self {
            Family::Bernoulli { p } => {
                let d = Bernoulli::new(p).map_err(|e| err(&e))?;
                (0..m).map(|_| if d.sample(rng) { 1.0 } else { 0.0 }).collect()
            }
            Family::Beta { a, b } => collect(Beta::new(a, b).map_err(|e| err(&e))?, rng, m),
            Family::Chi2 { k } => collect(ChiSquared::new(k).map_err(|e| err(&e))?, rng, m),
            Family::Exponential { rate } => collect(Exp::new(rate).map_err(|e| err(&e))?, rng, m),
            Family::Gamma { shape, scale } => collect(Gamma::new(shape, scale).map_err(|e| err(&e))?, rng, m),
            Family::Lognormal { mu, sigma } => collect(LogNormal::new(mu, sigma).map_err(|e| err(&e))?, rng, m),
            Family::Normal { mean, sd } => collect(Normal::new(mean, sd).map_err(|e| err(&e))?, rng, m),
            Family::Pareto { shape, scale } => collect(Pareto::new(scale, shape).map_err(|e| err(&e))?, rng, m),
            Family::Uniform { low, high } => collect(Uniform::new(low, high).map_err(|e| err(&e))?, rng, m),
            Family::Wald { mean, shape } => collect(InverseGaussian::new(mean, shape).map_err(|e| err(&e))?, rng, m),
            Family::Weibull { shape, scale } => collect(Weibull::new(scale, shape).map_err(|e| err(&e))?, rng, m),
        })
    }
}

fn collect<D: Distribution<f64>>(d: D, rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    d.sample_iter(rng).take(m).collect()
}

/// `m` independent draws from `spec`, centered if requested.
pub fn sample(spec: &DistributionSpec, m: usize, seed: u64) -> Result<EmpiricalLoss> {
    spec.family.validate()?;
    if m == 0 {
        return Err(bad(spec.family.name(), "sample size must be positive"));
    }
    let shift = if spec.center {
        let mean = spec.family.mean();
        if !mean.is_finite() {
            return Err(bad(spec.family.name(), "cannot center a distribution without a finite mean"));
        }
        mean
    } else {
        0.0
    };
    let mut rng = substream(seed, spec.family.name());
    let mut values = spec.family.draw(&mut rng, m)?;
    if shift != 0.0 {
        values.iter_mut().for_each(|v| *v -= shift);
    }
    Ok(EmpiricalLoss::new(values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Feature matrix, targets and a split tag per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    examples: Examples,
    splits: Vec<Split>,
    classes: Option<usize>,
    unseen_categories: usize,
}

impl Dataset {
    pub fn new(columns: Vec<String>, examples: Examples, splits: Vec<Split>, classes: Option<usize>) -> Result<Self> {
        if examples.is_empty() {
            return Err(DataError::Schema("dataset needs at least one row".into()));
        }
        if columns.len() != examples.dim() || splits.len() != examples.len() {
            return Err(DataError::Schema(format!(
                "{} columns and {} split tags for {} rows of dimension {}",
                columns.len(),
                splits.len(),
                examples.len(),
                examples.dim()
            )));
        }
        Ok(Self { columns, examples, splits, classes, unseen_categories: 0 })
    }

    /// Every row tagged as training data.
    pub fn all_train(columns: Vec<String>, examples: Examples, classes: Option<usize>) -> Result<Self> {
        let splits = vec![Split::Train; examples.len()];
        Self::new(columns, examples, splits, classes)
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn examples(&self) -> &Examples {
        &self.examples
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Number of classes for classification targets (`None` for regression).
    pub fn classes(&self) -> Option<usize> {
        self.classes
    }

    /// Categorical values in val/test rows that were never seen in training.
    pub fn unseen_categories(&self) -> usize {
        self.unseen_categories
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Rows carrying `tag`, in their original order.
    pub fn part(&self, tag: Split) -> Examples {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.splits[i] == tag).collect();
        self.examples.select(&idx)
    }

    /// CSV with the feature columns, `target` and `split`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.columns.clone();
        header.push("target".into());
        header.push("split".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.examples.row(i).iter().map(f64::to_string).collect();
            rec.push(self.examples.target(i).to_string());
            rec.push(self.splits[i].as_str().into());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Geometry of the two-class planar data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Class2dConfig {
    pub n: usize,
    pub majority_frac: f64,
    pub flip_frac: f64,
    /// Majority class (label `-1`) center.
    pub majority_center: [f64; 2],
    /// Minority class (label `+1`) center.
    pub minority_center: [f64; 2],
    pub sd: f64,
}

impl Default for Class2dConfig {
    fn default() -> Self {
        Self {
            n: 500,
            majority_frac: 0.95,
            flip_frac: 0.05,
            majority_center: [-1.0, 0.0],
            minority_center: [2.5, 0.0],
            sd: 0.6,
        }
    }
}

/// Planar classification data plus which labels were flipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Class2d {
    pub dataset: Dataset,
    pub flipped: Vec<bool>,
}

/// Two isotropic Gaussian blobs with a fraction of labels flipped.
///
/// Exactly `round(n * majority_frac)` points belong to the majority blob and
/// exactly `round(n * flip_frac)` labels are flipped, chosen uniformly
/// without replacement. Draws landing on the wrong side of the perpendicular
/// bisector of the two centers are redrawn, so the unflipped data is always
/// linearly separable.
pub fn gen_class2d(config: &Class2dConfig, seed: u64) -> Result<Class2d> {
    let c = config;
    let in_unit = |v: f64| v > 0.0 && v < 1.0;
    if c.n == 0 || !in_unit(c.majority_frac) || !in_unit(c.flip_frac) || !(c.sd > 0.0) {
        return Err(DataError::Schema("class2d needs n > 0, fractions in (0, 1) and sd > 0".into()));
    }
    let dir = [c.minority_center[0] - c.majority_center[0], c.minority_center[1] - c.majority_center[1]];
    if dir == [0.0, 0.0] {
        return Err(DataError::Schema("class centers must differ".into()));
    }
    let mid = [
        0.5 * (c.minority_center[0] + c.majority_center[0]),
        0.5 * (c.minority_center[1] + c.majority_center[1]),
    ];
    let side = |p: [f64; 2]| (p[0] - mid[0]) * dir[0] + (p[1] - mid[1]) * dir[1];
    let noise = Normal::new(0.0, c.sd).map_err(|e| bad("normal", e.to_string()))?;
    let mut rng = substream(seed, "class2d/points");
    let majority = ((c.n as f64) * c.majority_frac).round() as usize;
    let mut features = Vec::with_capacity(2 * c.n);
    let mut targets = Vec::with_capacity(c.n);
    for i in 0..c.n {
        let (center, label) = if i < majority { (c.majority_center, -1.0) } else { (c.minority_center, 1.0) };
        let p = loop {
            let p = [center[0] + noise.sample(&mut rng), center[1] + noise.sample(&mut rng)];
            if side(p) * label > 0.0 {
                break p;
            }
        };
        features.extend_from_slice(&p);
        targets.push(label);
    }
    let flips = ((c.n as f64) * c.flip_frac).round() as usize;
    let mut flip_rng = substream(seed, "class2d/flips");
    let mut flipped = vec![false; c.n];
    for i in index::sample(&mut flip_rng, c.n, flips.min(c.n)) {
        flipped[i] = true;
        targets[i] = -targets[i];
    }
    let examples = Examples::new(2, features, targets)?;
    Ok(Class2d {
        dataset: Dataset::all_train(vec!["x1".into(), "x2".into()], examples, Some(2))?,
        flipped,
    })
}

/// Linear regression with heavy-tailed inputs and noise:
/// `y = <h*, x> + eps`, lognormal coordinates, Student-t noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct E1Config {
    pub h_star: Vec<f64>,
    pub feature_mu: f64,
    pub feature_sigma: f64,
    /// Degrees of freedom of the noise; above 2 for finite variance.
    pub noise_df: f64,
    pub noise_scale: f64,
}

impl Default for E1Config {
    fn default() -> Self {
        Self {
            h_star: vec![1.0, -0.5],
            feature_mu: 0.0,
            feature_sigma: 1.0,
            noise_df: 2.5,
            noise_scale: 1.0,
        }
    }
}

/// `n` draws of the heavy-tailed regression model from the stream `(seed, tag)`.
pub fn gen_e1(config: &E1Config, n: usize, seed: u64, tag: &str) -> Result<Examples> {
    let d = config.h_star.len();
    if d == 0 || n == 0 {
        return Err(DataError::Schema("E1 needs a nonempty h* and n > 0".into()));
    }
    positive("student_t", "noise_df", config.noise_df)?;
    positive("student_t", "noise_scale", config.noise_scale)?;
    let x_dist = LogNormal::new(config.feature_mu, config.feature_sigma).map_err(|e| bad("lognormal", e.to_string()))?;
    let noise = StudentT::new(config.noise_df).map_err(|e| bad("student_t", e.to_string()))?;
    let mut rng = substream(seed, tag);
    let mut features = Vec::with_capacity(n * d);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let start = features.len();
        features.extend((0..d).map(|_| x_dist.sample(&mut rng)));
        let signal: f64 = features[start..].iter().zip(&config.h_star).map(|(x, h)| x * h).sum();
        targets.push(signal + config.noise_scale * noise.sample(&mut rng));
    }
    Ok(Examples::new(d, features, targets)?)
}

/// Scales `count` uniformly chosen rows (features and target together) by
/// factors `10^e` with `e` uniform on `[1, log10(max_scale)]`; the first
/// chosen row always gets exactly `max_scale`.
pub fn inject_outliers(examples: &Examples, count: usize, max_scale: f64, seed: u64) -> Result<Examples> {
    if !(max_scale >= 10.0) || count > examples.len() {
        return Err(DataError::Schema("need max_scale >= 10 and count <= n".into()));
    }
    let mut rng = substream(seed, "outliers");
    let d = examples.dim();
    let mut features = examples.features().to_vec();
    let mut targets = examples.targets().to_vec();
    let top = max_scale.log10();
    for (j, i) in index::sample(&mut rng, examples.len(), count).into_iter().enumerate() {
        let scale = if j == 0 { max_scale } else { 10f64.powf(rng.random_range(1.0..=top)) };
        features[i * d..(i + 1) * d].iter_mut().for_each(|v| *v *= scale);
        targets[i] *= scale;
    }
    Ok(Examples::new(d, features, targets)?)
}

const PHONES_CSV: &str = include_str!("../assets/phones.csv");

/// One row of the Belgian phone-call table.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct PhonesRow {
    /// Two-digit year (50 = 1950).
    pub year: f64,
    /// Calls, in tens of millions.
    pub calls: f64,
}

/// The embedded 24-row table, in year order.
pub fn phones_table() -> Result<Vec<PhonesRow>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(PHONES_CSV.as_bytes());
    let rows: Vec<PhonesRow> = reader.deserialize().collect::<std::result::Result<_, _>>()?;
    if rows.is_empty() {
        return Err(DataError::MissingTable("phones"));
    }
    Ok(rows)
}

/// Phones regression data: year min-max scaled to `[0, 1]`, calls raw.
///
/// With `high_leverage`, the last point `(year, calls)` is multiplied by 5
/// before scaling, making it extreme in both coordinates.
pub fn load_phones(high_leverage: bool) -> Result<Dataset> {
    let mut rows = phones_table()?;
    if high_leverage {
        let last = rows.last_mut().expect("nonempty table");
        last.year *= 5.0;
        last.calls *= 5.0;
    }
    let (lo, hi) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.year), hi.max(r.year)));
    let features = rows.iter().map(|r| (r.year - lo) / (hi - lo)).collect();
    let targets = rows.iter().map(|r| r.calls).collect();
    Dataset::all_train(vec!["year".into()], Examples::new(1, features, targets)?, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Real-valued response.
    Real,
    /// Two labels mapped to `-1`/`+1` in sorted order.
    Binary,
    /// Labels mapped to `0..k` in sorted order.
    Multiclass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub target: String,
    pub target_kind: TargetKind,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default = "comma")]
    pub delimiter: char,
}

fn comma() -> char {
    ','
}

impl CsvSchema {
    pub fn new(target: &str, target_kind: TargetKind) -> Self {
        Self {
            target: target.into(),
            target_kind,
            categorical: Vec::new(),
            delimiter: ',',
        }
    }
}

/// Split sizes: `floor(n * val)` and `floor(n * test)`, the rest is training data.
pub fn split_sizes(n: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (train, val, test) = fractions;
    if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f)) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(DataError::Schema(format!("split fractions {fractions:?} must be in [0, 1] and sum to 1")));
    }
    let n_val = (n as f64 * val).floor() as usize;
    let n_test = (n as f64 * test).floor() as usize;
    Ok((n - n_val - n_test, n_val, n_test))
}

/// [`load_csv_reader`] on a file.
pub fn load_csv(path: &Path, schema: &CsvSchema, split: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    load_csv_reader(std::fs::File::open(path)?, schema, split, seed)
}

/// Parses a headed CSV into a dataset.
///
/// Rows are assigned to splits by a seeded shuffle. Categorical columns are
/// one-hot encoded with categories learned on the training rows (unseen
/// values elsewhere become all zeros and are counted); numeric columns are
/// min-max scaled with training-row statistics.
pub fn load_csv_reader<R: Read>(input: R, schema: &CsvSchema, split: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    if !schema.delimiter.is_ascii() {
        return Err(DataError::Schema("delimiter must be a single ASCII character".into()));
    }
    let mut reader = csv::ReaderBuilder::new().delimiter(schema.delimiter as u8).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let target_col = header
        .iter()
        .position(|h| *h == schema.target)
        .ok_or_else(|| DataError::Schema(format!("target column {:?} not found", schema.target)))?;
    for c in &schema.categorical {
        if !header.contains(c) {
            return Err(DataError::Schema(format!("categorical column {c:?} not found")));
        }
    }
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        records.push(rec.iter().map(str::to_string).collect::<Vec<_>>());
    }
    let n = records.len();
    if n == 0 {
        return Err(DataError::Schema("no data rows".into()));
    }
    let (n_train, n_val, _) = split_sizes(n, split)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "split"));
    let mut splits = vec![Split::Test; n];
    for (pos, &i) in order.iter().enumerate() {
        splits[i] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let is_train = |i: usize| splits[i] == Split::Train;

    // Column blocks: (source column, encoding).
    enum Block {
        Numeric { lo: f64, hi: f64 },
        OneHot(Vec<String>),
    }
    let mut names = Vec::new();
    let mut blocks = Vec::new();
    let mut numeric = vec![Vec::new(); header.len()];
    for (j, col) in header.iter().enumerate() {
        if j == target_col {
            continue;
        }
        if schema.categorical.contains(col) {
            let cats: Vec<String> = records
                .iter()
                .enumerate()
                .filter(|(i, _)| is_train(*i))
                .map(|(_, r)| r[j].clone())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            names.extend(cats.iter().map(|c| format!("{col}={c}")));
            blocks.push((j, Block::OneHot(cats)));
        } else {
            let mut values = Vec::with_capacity(n);
            for (i, r) in records.iter().enumerate() {
                let v: f64 = r[j].trim().parse().map_err(|e: std::num::ParseFloatError| DataError::Parse {
                    row: i + 1,
                    column: col.clone(),
                    reason: e.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DataError::Parse { row: i + 1, column: col.clone(), reason: "non-finite value".into() });
                }
                values.push(v);
            }
            let (lo, hi) = values
                .iter()
                .enumerate()
                .filter(|(i, _)| is_train(*i))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| (lo.min(v), hi.max(v)));
            numeric[j] = values;
            names.push(col.clone());
            blocks.push((j, Block::Numeric { lo, hi }));
        }
    }
    if names.is_empty() {
        return Err(DataError::Schema("no feature columns".into()));
    }

    let (targets, classes) = encode_targets(&records, target_col, &header[target_col], schema.target_kind, &is_train)?;
    let mut features = Vec::with_capacity(n * names.len());
    let mut unseen = 0;
    for (i, r) in records.iter().enumerate() {
        for (j, block) in &blocks {
            match block {
                Block::Numeric { lo, hi } => {
                    let v = numeric[*j][i];
                    features.push(if hi > lo { (v - lo) / (hi - lo) } else { 0.0 });
                }
                Block::OneHot(cats) => {
                    let hit = cats.iter().position(|c| *c == r[*j]);
                    if hit.is_none() {
                        unseen += 1;
                    }
                    features.extend((0..cats.len()).map(|k| if Some(k) == hit { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    if unseen > 0 {
        log::warn!("{unseen} categorical values outside the training categories were encoded as zeros");
    }
    let examples = Examples::new(names.len(), features, targets)?;
    let mut ds = Dataset::new(names, examples, splits, classes)?;
    ds.unseen_categories = unseen;
    Ok(ds)
}

fn encode_targets(
    records: &[Vec<String>],
    col: usize,
    name: &str,
    kind: TargetKind,
    is_train: &dyn Fn(usize) -> bool,
) -> Result<(Vec<f64>, Option<usize>)> {
    match kind {
        TargetKind::Real => {
            let mut out = Vec::with_capacity(records.len());
            for (i, r) in records.iter().enumerate() {
                let v: f64 = r[col].trim().parse().map_err(|e: std::num::ParseFloatError| DataError::Parse {
                    row: i + 1,
                    column: name.into(),
                    reason: e.to_string(),
                })?;
                out.push(v);
            }
            Ok((out, None))
        }
        TargetKind::Binary | TargetKind::Multiclass => {
            // Labels come from every row: a label seen only outside training
            // is still a valid class.
            let labels: BTreeMap<&str, usize> = records
                .iter()
                .map(|r| r[col].as_str())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(k, l)| (l, k))
                .collect();
            let _ = is_train;
            if kind == TargetKind::Binary && labels.len() != 2 {
                return Err(DataError::Schema(format!("binary target {name:?} has {} distinct labels", labels.len())));
            }
            let out = records
                .iter()
                .map(|r| {
                    let k = labels[r[col].as_str()];
                    match kind {
                        TargetKind::Binary => {
                            if k == 0 {
                                -1.0
                            } else {
                                1.0
                            }
                        }
                        _ => k as f64,
                    }
                })
                .collect();
            Ok((out, Some(labels.len())))
        }
    }
}

const DIGITS_CSV: &str = include_str!("../assets/digits.csv");

/// The embedded 8x8 handwritten digits table (1797 rows, 64 pixel columns,
/// 10 classes), split and normalized like any CSV input.
pub fn load_digits(split: (f64, f64, f64), seed: u64) -> Result<Dataset> {
    load_csv_reader(DIGITS_CSV.as_bytes(), &CsvSchema::new("label", TargetKind::Multiclass), split, seed)
}
