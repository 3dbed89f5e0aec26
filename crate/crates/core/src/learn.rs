//! Linear models trained on transformed losses.
//!
//! A base loss `l(h)` of a linear model is turned into per-sample feedback
//! `eta * theta + rho_sigma(l(h) - theta)` whose gradient in `h` is
//! `rho_sigma'(l - theta) * grad l`. Three drivers are provided:
//! full-batch gradient descent (optionally joint in the threshold),
//! normalized momentum SGD with a fixed threshold, and shuffled mini-batch
//! SGD with iterate averaging. Comparison risks (CVaR, tilted, Cressie-Read
//! DRO) share the same drivers through their threshold forms.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::{DispersionError, DispersionKind, DispersionSpec};
use crate::risks::{dro_radius, RiskError, RiskParams};
use crate::scalar_opt::{self, Bracket};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid target {value} at row {row} for the {loss} loss")]
    InvalidTarget { row: usize, value: f64, loss: BaseLoss },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error("no finite gradient bound for the {loss} loss with {spec}")]
    NoFiniteBound { loss: BaseLoss, spec: DispersionSpec },
    #[error("oracle standard error {std_err} exceeds 5% of the bound {bound}")]
    Inconclusive { std_err: f64, bound: f64 },
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
}

pub type Result<T> = std::result::Result<T, LearnError>;

fn config_error(msg: impl Into<String>) -> LearnError {
    LearnError::InvalidConfig(msg.into())
}

/// Row-major feature matrix with one target per row.
///
/// Targets are real responses for the quadratic loss, `-1`/`+1` for binary
/// losses, and class indices `0..k` for the multiclass loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Examples {
    dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl Examples {
    pub fn new(dim: usize, features: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(config_error("feature dimension must be positive"));
        }
        if features.len() != dim * targets.len() {
            return Err(LearnError::DimensionMismatch {
                expected: dim * targets.len(),
                got: features.len(),
            });
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(config_error("features and targets must be finite"));
        }
        Ok(Self { dim, features, targets })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(LearnError::DimensionMismatch { expected: dim, got: bad.len() });
        }
        Self::new(dim, rows.concat(), targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            features.extend_from_slice(self.row(i));
        }
        Self {
            dim: self.dim,
            features,
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    /// Copy with a constant `1` appended to every row.
    pub fn with_intercept(&self) -> Self {
        let mut features = Vec::with_capacity(self.len() * (self.dim + 1));
        for i in 0..self.len() {
            features.extend_from_slice(self.row(i));
            features.push(1.0);
        }
        Self {
            dim: self.dim + 1,
            features,
            targets: self.targets.clone(),
        }
    }

    pub fn max_feature_norm(&self) -> f64 {
        (0..self.len()).map(|i| norm(self.row(i))).fold(0.0, f64::max)
    }

    pub fn mean_sq_feature_norm(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        (0..self.len()).map(|i| dot(self.row(i), self.row(i))).sum::<f64>() / self.len() as f64
    }
}

/// `k x d` weight matrix, row-major; row `j` scores class `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
}

impl LinearModel {
    pub fn new(classes: usize, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if classes == 0 || dim == 0 {
            return Err(LearnError::InvalidModel("empty weight matrix".into()));
        }
        if weights.len() != classes * dim {
            return Err(LearnError::DimensionMismatch {
                expected: classes * dim,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(LearnError::InvalidModel("weights must be finite".into()));
        }
        Ok(Self { classes, dim, weights })
    }

    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes: classes.max(1),
            dim: dim.max(1),
            weights: vec![0.0; classes.max(1) * dim.max(1)],
        }
    }

    /// Single-output model.
    pub fn vector(weights: Vec<f64>) -> Result<Self> {
        let dim = weights.len();
        Self::new(1, dim, weights)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.dim..(j + 1) * self.dim]
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        norm(&self.weights)
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes).map(|j| dot(self.row(j), x)).collect()
    }

    /// `self - step * direction`.
    fn step(&mut self, direction: &[f64], step: f64) {
        for (w, g) in self.weights.iter_mut().zip(direction) {
            *w -= step * g;
        }
    }

    /// Uniform average of models with matching shape.
    pub fn average(models: &[LinearModel]) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| LearnError::InvalidModel("nothing to average".into()))?;
        let mut weights = vec![0.0; first.weights.len()];
        for m in models {
            if m.classes != first.classes || m.dim != first.dim {
                return Err(LearnError::DimensionMismatch {
                    expected: first.weights.len(),
                    got: m.weights.len(),
                });
            }
            for (acc, w) in weights.iter_mut().zip(&m.weights) {
                *acc += w;
            }
        }
        let n = models.len() as f64;
        weights.iter_mut().for_each(|w| *w /= n);
        Self::new(first.classes, first.dim, weights)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLoss {
    Quadratic,
    BinaryLogistic,
    MulticlassLogistic,
    Hinge,
    Unhinged,
}

impl std::fmt::Display for BaseLoss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            BaseLoss::Quadratic => "quadratic",
            BaseLoss::BinaryLogistic => "binary_logistic",
            BaseLoss::MulticlassLogistic => "multiclass_logistic",
            BaseLoss::Hinge => "hinge",
            BaseLoss::Unhinged => "unhinged",
        };
        f.write_str(name)
    }
}

impl BaseLoss {
    pub fn is_classification(&self) -> bool {
        !matches!(self, BaseLoss::Quadratic)
    }

    /// Checks the model shape against the loss and every target in `examples`.
    pub fn validate(&self, model: &LinearModel, examples: &Examples) -> Result<()> {
        if model.dim != examples.dim {
            return Err(LearnError::DimensionMismatch {
                expected: model.dim,
                got: examples.dim,
            });
        }
        match self {
            BaseLoss::MulticlassLogistic if model.classes < 2 => {
                return Err(LearnError::InvalidModel("multiclass loss needs at least two classes".into()))
            }
            BaseLoss::MulticlassLogistic => {}
            _ if model.classes != 1 => {
                return Err(LearnError::InvalidModel(format!("{self} loss needs a single output")))
            }
            _ => {}
        }
        for (row, &y) in examples.targets.iter().enumerate() {
            let ok = match self {
                BaseLoss::Quadratic => true,
                BaseLoss::MulticlassLogistic => y >= 0.0 && y.fract() == 0.0 && (y as usize) < model.classes,
                _ => y == 1.0 || y == -1.0,
            };
            if !ok {
                return Err(LearnError::InvalidTarget { row, value: y, loss: *self });
            }
        }
        Ok(())
    }

    /// Loss at `x`, the score-space gradient in `coef` (so that
    /// `grad = coef (outer) x`), and a miss measure: `|residual|` for the
    /// quadratic loss, a 0/1 misclassification flag otherwise.
    #[inline]
    fn eval(&self, model: &LinearModel, x: &[f64], y: f64, coef: &mut [f64]) -> (f64, f64) {
        match self {
            BaseLoss::Quadratic => {
                let r = dot(&model.weights, x) - y;
                coef[0] = r;
                (0.5 * r * r, r.abs())
            }
            BaseLoss::BinaryLogistic => {
                let m = y * dot(&model.weights, x);
                coef[0] = -y * logistic(-m);
                (softplus(-m), miss(m))
            }
            BaseLoss::Hinge => {
                let m = y * dot(&model.weights, x);
                coef[0] = if m < 1.0 { -y } else { 0.0 };
                ((1.0 - m).max(0.0), miss(m))
            }
            BaseLoss::Unhinged => {
                let m = y * dot(&model.weights, x);
                coef[0] = -y;
                (1.0 - m, miss(m))
            }
            BaseLoss::MulticlassLogistic => {
                let label = y as usize;
                let mut top = f64::NEG_INFINITY;
                let mut arg = 0;
                for (j, c) in coef.iter_mut().enumerate() {
                    *c = dot(model.row(j), x);
                    if *c > top {
                        top = *c;
                        arg = j;
                    }
                }
                let own = coef[label];
                let mut sum = 0.0;
                for c in coef.iter_mut() {
                    *c = (*c - top).exp();
                    sum += *c;
                }
                for c in coef.iter_mut() {
                    *c /= sum;
                }
                coef[label] -= 1.0;
                (top + sum.ln() - own, if arg == label { 0.0 } else { 1.0 })
            }
        }
    }
}

fn miss(margin: f64) -> f64 {
    if margin > 0.0 {
        0.0
    } else {
        1.0
    }
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Base loss and its gradient (a `k x d` matrix, row-major) at one example.
pub fn base_loss_value_grad(model: &LinearModel, x: &[f64], y: f64, kind: BaseLoss) -> Result<(f64, Vec<f64>)> {
    let single = Examples::new(x.len().max(1), x.to_vec(), vec![y])?;
    kind.validate(model, &single)?;
    let mut coef = vec![0.0; model.classes];
    let (loss, _) = kind.eval(model, x, y, &mut coef);
    let grad = coef.iter().flat_map(|c| x.iter().map(move |xi| c * xi)).collect();
    Ok((loss, grad))
}

/// Per-sample transformed loss `eta * theta + rho_sigma(loss - theta)`.
pub fn transformed_loss(loss: f64, spec: &DispersionSpec, theta: f64, eta: f64) -> f64 {
    eta * theta + spec.value(loss - theta)
}

/// Gradients of the transformed loss in `h` and `theta`, given the base gradient.
pub fn transformed_grad(loss: f64, grad: &[f64], spec: &DispersionSpec, theta: f64, eta: f64) -> (Vec<f64>, f64) {
    let w = spec.slope(loss - theta);
    (grad.iter().map(|g| w * g).collect(), eta - w)
}

/// Objective family used for training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "risk", rename_all = "snake_case")]
pub enum TrainRisk {
    Erm,
    /// T-risk with `rho(x) = x^2 / 2`, `sigma = 1`, `eta = 1`.
    MeanVariance,
    #[serde(rename = "trisk")]
    TRisk { spec: DispersionSpec, eta: f64 },
    Cvar { beta: f64 },
    Tilted { gamma: f64 },
    Dro {
        #[serde(default = "two")]
        c: f64,
        a_tilde: f64,
    },
}

fn two() -> f64 {
    2.0
}

impl TrainRisk {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TrainRisk::TRisk { spec, eta } => {
                if spec.kind() != DispersionKind::Barron {
                    return Err(config_error("training needs a differentiable (Barron) dispersion"));
                }
                if !eta.is_finite() {
                    return Err(config_error("eta must be finite"));
                }
                Ok(())
            }
            TrainRisk::Cvar { beta } => RiskParams::CVaR { beta }.validate().map_err(Into::into),
            TrainRisk::Tilted { gamma } => RiskParams::Tilted { gamma }.validate().map_err(Into::into),
            TrainRisk::Dro { c, a_tilde } => RiskParams::CressieReadDRO { c, a_tilde }.validate().map_err(Into::into),
            TrainRisk::Erm | TrainRisk::MeanVariance => Ok(()),
        }
    }

    /// Mean-variance becomes its T-risk form; everything else is unchanged.
    fn canonical(&self) -> Self {
        match self {
            TrainRisk::MeanVariance => TrainRisk::TRisk {
                spec: DispersionSpec::barron(2.0, 1.0).expect("valid spec"),
                eta: 1.0,
            },
            other => *other,
        }
    }

    /// Whether a threshold variable takes part in the objective.
    pub fn uses_threshold(&self) -> bool {
        !matches!(self, TrainRisk::Erm)
    }

    /// Family label used in output files.
    pub fn family(&self) -> &'static str {
        match self {
            TrainRisk::Erm => "erm",
            TrainRisk::MeanVariance => "mean_variance",
            TrainRisk::TRisk { .. } => "trisk",
            TrainRisk::Cvar { .. } => "cvar",
            TrainRisk::Tilted { .. } => "tilted",
            TrainRisk::Dro { .. } => "dro",
        }
    }
}

impl TryFrom<RiskParams> for TrainRisk {
    type Error = LearnError;

    fn try_from(params: RiskParams) -> Result<Self> {
        match params {
            RiskParams::TRisk { spec, eta, .. } | RiskParams::MinimalTRisk { spec, eta } => {
                Ok(TrainRisk::TRisk { spec, eta })
            }
            RiskParams::CVaR { beta } => Ok(TrainRisk::Cvar { beta }),
            RiskParams::Tilted { gamma } => Ok(TrainRisk::Tilted { gamma }),
            RiskParams::CressieReadDRO { c, a_tilde } => Ok(TrainRisk::Dro { c, a_tilde }),
            RiskParams::MLocation { .. } => Err(config_error("M-location is not a training objective")),
        }
    }
}

/// Objective value and gradients at one `(model, theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub grad_h: Vec<f64>,
    pub grad_theta: f64,
    /// Threshold the objective was evaluated at. For the tilted risk the
    /// threshold is eliminated in closed form and this is its optimum.
    pub theta: f64,
    /// Misclassification rate, or mean absolute residual for regression.
    pub error: f64,
    /// Mean base loss.
    pub mean_loss: f64,
}

/// Empirical objective of `risk` and its gradients over the rows `idx`
/// (all rows when `None`).
///
/// T-risk uses `eta * theta + mean rho(l - theta)`; CVaR and DRO use their
/// threshold forms `theta + mean phi(l - theta)`; the tilted risk uses
/// `log(mean exp(gamma * l)) / gamma` directly, whose gradient is the
/// softmax-weighted base gradient.
pub fn objective_and_grad(
    model: &LinearModel,
    theta: f64,
    examples: &Examples,
    idx: Option<&[usize]>,
    base: BaseLoss,
    risk: &TrainRisk,
) -> Result<Evaluation> {
    if model.dim != examples.dim {
        return Err(LearnError::DimensionMismatch { expected: model.dim, got: examples.dim });
    }
    let rows: Vec<usize> = match idx {
        Some(idx) => idx.to_vec(),
        None => (0..examples.len()).collect(),
    };
    if rows.is_empty() {
        return Err(config_error("objective over an empty set of rows"));
    }
    let k = model.classes;
    let n = rows.len() as f64;
    let mut losses = Vec::with_capacity(rows.len());
    let mut coefs = vec![0.0; rows.len() * k];
    let mut miss_sum = 0.0;
    for (slot, &i) in rows.iter().enumerate() {
        let (l, m) = base.eval(model, examples.row(i), examples.target(i), &mut coefs[slot * k..(slot + 1) * k]);
        losses.push(l);
        miss_sum += m;
    }
    let mean_loss = losses.iter().sum::<f64>() / n;

    let mut weights = vec![1.0; rows.len()];
    let mut theta_eff = theta;
    let (objective, grad_theta) = match risk.canonical() {
        TrainRisk::Erm => (mean_loss, 0.0),
        TrainRisk::MeanVariance => unreachable!("canonicalized"),
        TrainRisk::TRisk { spec, eta } => {
            let mut disp = 0.0;
            let mut slope = 0.0;
            for (w, &l) in weights.iter_mut().zip(&losses) {
                disp += spec.value(l - theta);
                *w = spec.slope(l - theta);
                slope += *w;
            }
            (eta * theta + disp / n, eta - slope / n)
        }
        TrainRisk::Cvar { beta } => {
            let mut excess = 0.0;
            let mut mass = 0.0;
            for (w, &l) in weights.iter_mut().zip(&losses) {
                if l > theta {
                    excess += l - theta;
                    *w = 1.0 / (1.0 - beta);
                    mass += *w;
                } else {
                    *w = 0.0;
                }
            }
            (theta + excess / (n * (1.0 - beta)), 1.0 - mass / n)
        }
        TrainRisk::Tilted { gamma } => {
            let top = losses.iter().map(|&l| gamma * l).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (w, &l) in weights.iter_mut().zip(&losses) {
                *w = (gamma * l - top).exp();
                sum += *w;
            }
            for w in weights.iter_mut() {
                *w *= n / sum;
            }
            let value = (top + (sum / n).ln()) / gamma;
            theta_eff = value;
            (value, 0.0)
        }
        TrainRisk::Dro { c, a_tilde } => {
            let c_star = c / (c - 1.0);
            let scale = (1.0 + c * (c - 1.0) * dro_radius(a_tilde)).powf(1.0 / c);
            let top = losses.iter().map(|&l| l - theta).fold(0.0, f64::max);
            if top == 0.0 {
                weights.iter_mut().for_each(|w| *w = 0.0);
                (theta, 1.0)
            } else {
                let mean_pow = losses
                    .iter()
                    .map(|&l| ((l - theta).max(0.0) / top).powf(c_star))
                    .sum::<f64>()
                    / n;
                let denom = mean_pow.powf(1.0 - 1.0 / c_star);
                let mut mass = 0.0;
                for (w, &l) in weights.iter_mut().zip(&losses) {
                    let e = (l - theta).max(0.0) / top;
                    *w = if e > 0.0 { scale * e.powf(c_star - 1.0) / denom } else { 0.0 };
                    mass += *w;
                }
                (theta + scale * top * mean_pow.powf(1.0 / c_star), 1.0 - mass / n)
            }
        }
    };

    let d = model.dim;
    let mut grad_h = vec![0.0; k * d];
    for (slot, &i) in rows.iter().enumerate() {
        let w = weights[slot];
        if w == 0.0 {
            continue;
        }
        let x = examples.row(i);
        for j in 0..k {
            let c = w * coefs[slot * k + j];
            if c != 0.0 {
                for (g, xi) in grad_h[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += c * xi;
                }
            }
        }
    }
    grad_h.iter_mut().for_each(|g| *g /= n);

    Ok(Evaluation {
        objective,
        grad_h,
        grad_theta,
        theta: theta_eff,
        error: miss_sum / n,
        mean_loss,
    })
}

/// Mean base loss of `model` on `examples`, plus the per-row losses.
pub fn base_losses(model: &LinearModel, examples: &Examples, base: BaseLoss) -> Result<Vec<f64>> {
    base.validate(model, examples)?;
    let mut coef = vec![0.0; model.classes];
    Ok((0..examples.len())
        .map(|i| base.eval(model, examples.row(i), examples.target(i), &mut coef).0)
        .collect())
}

/// Misclassification rate (or mean absolute residual for the quadratic loss).
pub fn error_rate(model: &LinearModel, examples: &Examples, base: BaseLoss) -> Result<f64> {
    base.validate(model, examples)?;
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut coef = vec![0.0; model.classes];
    let total: f64 = (0..examples.len())
        .map(|i| base.eval(model, examples.row(i), examples.target(i), &mut coef).1)
        .sum();
    Ok(total / examples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    FullBatchGd,
    NormalizedMomentum,
    MinibatchAvg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Threshold descends alongside the weights.
    Joint,
    /// Threshold stays at the given value throughout.
    Fixed { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    /// Iterations for gradient descent and momentum SGD.
    pub steps: usize,
    /// Passes over the data for mini-batch SGD.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    pub step_size: f64,
    /// Use `b = 1 - 1/sqrt(T)`, `a = T^(-3/4)` instead of `momentum`/`step_size`.
    #[serde(default)]
    pub theorem1_schedule: bool,
    #[serde(default)]
    pub momentum: Option<f64>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub threshold_mode: ThresholdMode,
    /// Starting threshold in joint mode; defaults to the mean initial loss.
    #[serde(default)]
    pub theta_init: Option<f64>,
    pub risk: TrainRisk,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_epochs() -> usize {
    30
}

fn default_batch() -> usize {
    32
}

fn default_mode() -> ThresholdMode {
    ThresholdMode::Joint
}

fn default_log_every() -> usize {
    1
}

impl TrainConfig {
    pub fn full_batch(risk: TrainRisk, steps: usize, step_size: f64) -> Self {
        Self {
            optimizer: Optimizer::FullBatchGd,
            steps,
            epochs: default_epochs(),
            step_size,
            theorem1_schedule: false,
            momentum: None,
            batch_size: default_batch(),
            seed: 0,
            threshold_mode: ThresholdMode::Joint,
            theta_init: None,
            risk,
            log_every: default_log_every(),
        }
    }

    pub fn minibatch(risk: TrainRisk, epochs: usize, batch_size: usize, step_size: f64, seed: u64) -> Self {
        Self {
            optimizer: Optimizer::MinibatchAvg,
            epochs,
            batch_size,
            seed,
            ..Self::full_batch(risk, 0, step_size)
        }
    }

    fn validate(&self, expected: Optimizer) -> Result<()> {
        if self.optimizer != expected {
            return Err(config_error(format!("expected optimizer {expected:?}, got {:?}", self.optimizer)));
        }
        if !(self.step_size >= 0.0 && self.step_size.is_finite()) {
            return Err(config_error("step size must be nonnegative and finite"));
        }
        if self.log_every == 0 || self.batch_size == 0 {
            return Err(config_error("log_every and batch_size must be positive"));
        }
        if let ThresholdMode::Fixed { theta } = self.threshold_mode {
            if !theta.is_finite() {
                return Err(config_error("fixed threshold must be finite"));
            }
        }
        self.risk.validate()
    }

    /// Momentum schedule for [`train_normalized_momentum`] over `steps` iterations.
    pub fn momentum_schedule(&self) -> Result<MomentumSchedule> {
        if self.theorem1_schedule {
            return MomentumSchedule::theorem1(self.steps);
        }
        let b = self.momentum.unwrap_or(1.0 - 1.0 / (self.steps.max(1) as f64).sqrt());
        MomentumSchedule::new(b, self.step_size)
    }

    fn initial_theta(&self, model: &LinearModel, examples: &Examples, base: BaseLoss) -> Result<f64> {
        Ok(match (self.threshold_mode, self.theta_init) {
            (ThresholdMode::Fixed { theta }, _) => theta,
            (ThresholdMode::Joint, Some(theta)) => theta,
            (ThresholdMode::Joint, None) => {
                let losses = base_losses(model, examples, base)?;
                losses.iter().sum::<f64>() / losses.len() as f64
            }
        })
    }
}

/// One logged point of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub weight_norm: f64,
    pub error: f64,
    pub theta: f64,
}

impl TraceRecord {
    fn from_eval(step: usize, model: &LinearModel, eval: &Evaluation) -> Self {
        Self {
            step,
            objective: eval.objective,
            grad_norm: norm(&eval.grad_h),
            weight_norm: model.norm(),
            error: eval.error,
            theta: eval.theta,
        }
    }
}

/// Writes records as CSV with header `step,objective,grad_norm,weight_norm,error,theta`.
pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(["step", "objective", "grad_norm", "weight_norm", "error", "theta"])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub model: LinearModel,
    pub theta: f64,
    pub trace: Vec<TraceRecord>,
}

fn finite_eval(eval: &Evaluation, step: usize) -> Result<()> {
    let ok = eval.objective.is_finite()
        && eval.grad_theta.is_finite()
        && eval.theta.is_finite()
        && eval.grad_h.iter().all(|g| g.is_finite());
    if ok {
        Ok(())
    } else {
        Err(LearnError::Diverged { step })
    }
}

/// One descent step on `(model, theta)` from an evaluation.
fn descend(model: &mut LinearModel, theta: &mut f64, eval: &Evaluation, config: &TrainConfig, step: usize) -> Result<()> {
    model.step(&eval.grad_h, config.step_size);
    match (config.threshold_mode, config.risk) {
        (_, TrainRisk::Tilted { .. }) => *theta = eval.theta,
        (ThresholdMode::Joint, _) => *theta -= config.step_size * eval.grad_theta,
        (ThresholdMode::Fixed { .. }, _) => {}
    }
    if model.weights.iter().all(|w| w.is_finite()) && theta.is_finite() {
        Ok(())
    } else {
        Err(LearnError::Diverged { step })
    }
}

/// Full-batch gradient descent for `config.steps` iterations.
///
/// The trace holds the state before steps `0, log_every, 2 log_every, ...`
/// and after the last step.
pub fn train_full_batch_gd(
    examples: &Examples,
    model0: &LinearModel,
    base: BaseLoss,
    config: &TrainConfig,
) -> Result<TrainResult> {
    config.validate(Optimizer::FullBatchGd)?;
    base.validate(model0, examples)?;
    if examples.is_empty() {
        return Err(config_error("training set is empty"));
    }
    let mut model = model0.clone();
    let mut theta = config.initial_theta(&model, examples, base)?;
    let mut trace = Vec::new();
    for step in 0..config.steps {
        let eval = objective_and_grad(&model, theta, examples, None, base, &config.risk)?;
        finite_eval(&eval, step)?;
        if step % config.log_every == 0 {
            trace.push(TraceRecord::from_eval(step, &model, &eval));
        }
        descend(&mut model, &mut theta, &eval, config, step)?;
    }
    let eval = objective_and_grad(&model, theta, examples, None, base, &config.risk)?;
    finite_eval(&eval, config.steps)?;
    trace.push(TraceRecord::from_eval(config.steps, &model, &eval));
    if let TrainRisk::Tilted { .. } = config.risk {
        theta = eval.theta;
    }
    Ok(TrainResult { model, theta, trace })
}

/// Output of [`train_minibatch_avg`].
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRun {
    /// Uniform average of the post-epoch iterates.
    pub model: LinearModel,
    pub theta: f64,
    /// Iterate and threshold at the end of each epoch.
    pub snapshots: Vec<(LinearModel, f64)>,
    /// One record per epoch, evaluated on the full training set at the snapshot.
    pub trace: Vec<TraceRecord>,
}

impl AveragedRun {
    /// Running averages of the snapshots: entry `e` averages epochs `1..=e+1`.
    pub fn running_averages(&self) -> Vec<(LinearModel, f64)> {
        let mut out = Vec::with_capacity(self.snapshots.len());
        let mut sum = vec![0.0; self.model.weights.len()];
        let mut theta_sum = 0.0;
        for (e, (m, t)) in self.snapshots.iter().enumerate() {
            sum.iter_mut().zip(&m.weights).for_each(|(s, w)| *s += w);
            theta_sum += t;
            let n = (e + 1) as f64;
            let model = LinearModel {
                classes: m.classes,
                dim: m.dim,
                weights: sum.iter().map(|s| s / n).collect(),
            };
            out.push((model, theta_sum / n));
        }
        out
    }
}

/// Shuffled mini-batch SGD with uniform averaging of post-epoch iterates.
///
/// Indices inside each batch are summed in ascending order, so a single
/// batch holding every row reproduces a full-batch step exactly.
pub fn train_minibatch_avg(
    examples: &Examples,
    model0: &LinearModel,
    base: BaseLoss,
    config: &TrainConfig,
) -> Result<AveragedRun> {
    config.validate(Optimizer::MinibatchAvg)?;
    base.validate(model0, examples)?;
    if examples.is_empty() || config.epochs == 0 {
        return Err(config_error("need a nonempty training set and at least one epoch"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = model0.clone();
    let mut theta = config.initial_theta(&model, examples, base)?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut snapshots = Vec::with_capacity(config.epochs);
    let mut trace = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let mut batch = chunk.to_vec();
            batch.sort_unstable();
            let eval = objective_and_grad(&model, theta, examples, Some(&batch), base, &config.risk)?;
            finite_eval(&eval, step)?;
            descend(&mut model, &mut theta, &eval, config, step)?;
            step += 1;
        }
        let eval = objective_and_grad(&model, theta, examples, None, base, &config.risk)?;
        finite_eval(&eval, step)?;
        if let TrainRisk::Tilted { .. } = config.risk {
            theta = eval.theta;
        }
        trace.push(TraceRecord::from_eval(epoch, &model, &eval));
        snapshots.push((model.clone(), theta));
    }
    let models: Vec<LinearModel> = snapshots.iter().map(|(m, _)| m.clone()).collect();
    let theta_avg = snapshots.iter().map(|(_, t)| t).sum::<f64>() / snapshots.len() as f64;
    Ok(AveragedRun {
        model: LinearModel::average(&models)?,
        theta: theta_avg,
        snapshots,
        trace,
    })
}

/// Momentum weight `b` and step size `a` for normalized momentum SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumSchedule {
    pub b: f64,
    pub a: f64,
}

impl MomentumSchedule {
    pub fn new(b: f64, a: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&b) {
            return Err(config_error(format!("momentum must lie in [0, 1), got {b}")));
        }
        if !(a >= 0.0 && a.is_finite()) {
            return Err(config_error(format!("step size must be nonnegative, got {a}")));
        }
        Ok(Self { b, a })
    }

    /// `b = 1 - 1/sqrt(T)`, `a = T^(-3/4)`.
    pub fn theorem1(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(config_error("need at least one step"));
        }
        let t = steps as f64;
        Ok(Self {
            b: 1.0 - 1.0 / t.sqrt(),
            a: t.powf(-0.75),
        })
    }
}

/// Settings for [`train_normalized_momentum`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumConfig {
    pub spec: DispersionSpec,
    pub theta: f64,
    pub eta: f64,
    pub schedule: MomentumSchedule,
    pub log_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumRun {
    pub model: LinearModel,
    /// `h_1, ..., h_{T+1}`.
    pub iterates: Vec<LinearModel>,
    /// Per-sample records: transformed loss, `|G_t|`, weight norm, miss, theta.
    pub trace: Vec<TraceRecord>,
    /// Steps skipped because the momentum vanished.
    pub skipped: usize,
    /// `max_t |G_t|`.
    pub max_grad_norm: f64,
}

/// Normalized momentum SGD with a fixed threshold, one stream row per step:
/// `M_t = b M_{t-1} + (1 - b) G_t`, `h_{t+1} = h_t - a M_t / |M_t|`.
pub fn train_normalized_momentum(
    stream: &Examples,
    model0: &LinearModel,
    base: BaseLoss,
    config: &MomentumConfig,
) -> Result<MomentumRun> {
    base.validate(model0, stream)?;
    if config.spec.kind() != DispersionKind::Barron {
        return Err(config_error("training needs a differentiable (Barron) dispersion"));
    }
    if !config.theta.is_finite() || config.log_every == 0 {
        return Err(config_error("theta must be finite and log_every positive"));
    }
    let MomentumSchedule { b, a } = config.schedule;
    let k = model0.classes;
    let d = model0.dim;
    let mut model = model0.clone();
    let mut momentum = vec![0.0; k * d];
    let mut coef = vec![0.0; k];
    let mut iterates = Vec::with_capacity(stream.len() + 1);
    let mut trace = Vec::new();
    let mut skipped = 0;
    let mut max_grad_norm: f64 = 0.0;
    for t in 0..stream.len() {
        iterates.push(model.clone());
        let x = stream.row(t);
        let (loss, miss) = base.eval(&model, x, stream.target(t), &mut coef);
        let w = config.spec.slope(loss - config.theta);
        let mut g_sq = 0.0;
        for j in 0..k {
            let c = w * coef[j];
            for (i, xi) in x.iter().enumerate() {
                let g = c * xi;
                g_sq += g * g;
                let m = &mut momentum[j * d + i];
                *m = b * *m + (1.0 - b) * g;
            }
        }
        let g_norm = g_sq.sqrt();
        let m_norm = norm(&momentum);
        if !(g_norm.is_finite() && m_norm.is_finite()) {
            return Err(LearnError::Diverged { step: t });
        }
        max_grad_norm = max_grad_norm.max(g_norm);
        if t % config.log_every == 0 {
            trace.push(TraceRecord {
                step: t,
                objective: transformed_loss(loss, &config.spec, config.theta, config.eta),
                grad_norm: g_norm,
                weight_norm: model.norm(),
                error: miss,
                theta: config.theta,
            });
        }
        if m_norm > 0.0 {
            model.step(&momentum, a / m_norm);
        } else {
            skipped += 1;
        }
    }
    iterates.push(model.clone());
    Ok(MomentumRun {
        model,
        iterates,
        trace,
        skipped,
        max_grad_norm,
    })
}

/// Analytic and observed bounds on the transformed gradient norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaEstimate {
    /// Bound valid for every model and every example with feature norm at
    /// most `feature_norm_bound`.
    pub analytic: f64,
    /// Largest transformed gradient norm over the given models and examples.
    pub empirical_max: f64,
    pub feature_norm_bound: f64,
}

/// `sup_{r >= 0} r |rho_sigma'(r^2 / 2 - theta)|`: the largest transformed
/// gradient of the quadratic loss per unit feature norm.
pub fn quadratic_slope_sup(spec: &DispersionSpec, theta: f64) -> Result<f64> {
    if spec.kind() != DispersionKind::Barron || spec.alpha() > 0.0 {
        return Err(LearnError::NoFiniteBound { loss: BaseLoss::Quadratic, spec: *spec });
    }
    let f = |r: f64| r * spec.slope(0.5 * r * r - theta).abs();
    let scale = spec.sigma() + theta.abs();
    // Dense grid in r near the origin plus a geometric grid in the loss
    // deviation far out; the function decays like r^-1 (or faster) beyond.
    let mut grid: Vec<f64> = (0..=4000)
        .map(|i| i as f64 / 4000.0 * (2.0 * (theta.abs() + 10.0 * spec.sigma())).sqrt())
        .collect();
    grid.extend((0..=4000).map(|i| {
        let u = spec.sigma() * 1e-3 * (1e7 * scale / spec.sigma()).powf(i as f64 / 4000.0);
        (2.0 * (theta.max(0.0) + u)).sqrt()
    }));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let (best_i, best) = grid
        .iter()
        .enumerate()
        .map(|(i, &r)| (i, f(r)))
        .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    let lo = grid[best_i.saturating_sub(1)];
    let hi = grid[(best_i + 1).min(grid.len() - 1)];
    let refined = match Bracket::new(lo, hi) {
        Ok(bracket) => scalar_opt::minimize_default(|r| -f(r), bracket).map(|m| -m.value).unwrap_or(best),
        Err(_) => best,
    };
    Ok(best.max(refined) * (1.0 + 1e-9))
}

/// Largest base-gradient norm per unit feature norm for losses whose score
/// derivative is bounded.
fn bounded_score_slope(base: BaseLoss) -> Option<f64> {
    match base {
        BaseLoss::Quadratic => None,
        BaseLoss::MulticlassLogistic => Some(std::f64::consts::SQRT_2),
        BaseLoss::BinaryLogistic | BaseLoss::Hinge | BaseLoss::Unhinged => Some(1.0),
    }
}

/// Bound `Gamma` on `|rho_sigma'(l - theta) grad l|`.
///
/// The analytic part needs a feature norm bound (the largest row norm of
/// `examples` unless given). For the quadratic loss it is
/// `X * sup_r r |rho'(r^2/2 - theta)|`, finite for shapes `<= 0`; for
/// losses with bounded score derivative it is `lipschitz * c * X`, finite
/// for shapes `<= 1`. The empirical part is the maximum over `models`.
pub fn estimate_gamma(
    examples: &Examples,
    base: BaseLoss,
    spec: &DispersionSpec,
    theta: f64,
    models: &[LinearModel],
    feature_norm_bound: Option<f64>,
) -> Result<GammaEstimate> {
    let x_max = feature_norm_bound.unwrap_or_else(|| examples.max_feature_norm());
    let analytic = match bounded_score_slope(base) {
        None => quadratic_slope_sup(spec, theta)? * x_max,
        Some(c) => {
            let lip = spec.lipschitz_coeff();
            if spec.kind() != DispersionKind::Barron || !lip.is_finite() {
                return Err(LearnError::NoFiniteBound { loss: base, spec: *spec });
            }
            lip * c * x_max
        }
    };
    let mut empirical_max: f64 = 0.0;
    for model in models {
        base.validate(model, examples)?;
        let mut coef = vec![0.0; model.classes];
        for i in 0..examples.len() {
            let x = examples.row(i);
            let (loss, _) = base.eval(model, x, examples.target(i), &mut coef);
            let g = spec.slope(loss - theta).abs() * norm(&coef) * norm(x);
            empirical_max = empirical_max.max(g);
        }
    }
    Ok(GammaEstimate {
        analytic,
        empirical_max,
        feature_norm_bound: x_max,
    })
}

/// Set of models `{h : |h - center| <= radius}` over which sup-norms are taken.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBall {
    pub center: LinearModel,
    pub radius: f64,
}

/// Constants entering the stationarity bound for normalized momentum SGD.
///
/// `l1` is the smoothness of the base loss in expectation, `l2 = sup|rho''|`
/// of the unscaled dispersion, `l3 = (2 l2 / sigma) E|grad l|_H^2`,
/// `l4 = l1 sup|rho'|`, `l5 = l3 + l4`, and
/// `l_hat = l5 / sigma + (l2 / sigma^2) E|grad l|_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothnessReport {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub l4: f64,
    pub l5: f64,
    pub l_hat: f64,
    /// `E sup_{h in H} |grad l(h)|`.
    pub grad_sup_mean: f64,
    /// `E sup_{h in H} |grad l(h)|^2`.
    pub grad_sup_sq_mean: f64,
    pub gamma_hat: f64,
}

/// Assembles [`SmoothnessReport`] from per-loss analytic formulas over `ball`.
pub fn smoothness_report(
    examples: &Examples,
    base: BaseLoss,
    spec: &DispersionSpec,
    ball: &ModelBall,
    gamma_hat: f64,
) -> Result<SmoothnessReport> {
    base.validate(&ball.center, examples)?;
    if spec.kind() != DispersionKind::Barron {
        return Err(config_error("smoothness needs a Barron dispersion"));
    }
    if examples.is_empty() || !(ball.radius >= 0.0) {
        return Err(config_error("need examples and a nonnegative radius"));
    }
    let n = examples.len() as f64;
    let r = ball.radius;
    let (mut sup_sum, mut sup_sq_sum) = (0.0, 0.0);
    for i in 0..examples.len() {
        let x = examples.row(i);
        let y = examples.target(i);
        let xn = norm(x);
        let sup = match base {
            BaseLoss::Quadratic => ((dot(&ball.center.weights, x) - y).abs() + r * xn) * xn,
            BaseLoss::BinaryLogistic => {
                let m = y * dot(&ball.center.weights, x);
                logistic(-(m - r * xn)) * xn
            }
            BaseLoss::MulticlassLogistic => std::f64::consts::SQRT_2 * xn,
            BaseLoss::Hinge | BaseLoss::Unhinged => xn,
        };
        sup_sum += sup;
        sup_sq_sum += sup * sup;
    }
    let msq = examples.mean_sq_feature_norm();
    let l1 = match base {
        BaseLoss::Quadratic => msq,
        BaseLoss::BinaryLogistic => 0.25 * msq,
        BaseLoss::MulticlassLogistic => 0.5 * msq,
        BaseLoss::Unhinged => 0.0,
        BaseLoss::Hinge => f64::INFINITY,
    };
    let sigma = spec.sigma();
    let l2 = spec.smoothness_coeff() * sigma * sigma;
    let grad_sup_mean = sup_sum / n;
    let grad_sup_sq_mean = sup_sq_sum / n;
    let l3 = 2.0 * l2 / sigma * grad_sup_sq_mean;
    let l4 = if l1 == 0.0 { 0.0 } else { l1 * spec.unscaled_slope_bound() };
    let l5 = l3 + l4;
    Ok(SmoothnessReport {
        l1,
        l2,
        l3,
        l4,
        l5,
        l_hat: l5 / sigma + l2 / (sigma * sigma) * grad_sup_mean,
        grad_sup_mean,
        grad_sup_sq_mean,
        gamma_hat,
    })
}

/// Monte-Carlo estimate of the T-risk and its gradient in `h` at a fixed threshold.
pub struct RiskGradOracle<'a> {
    pub sample: &'a Examples,
    pub base: BaseLoss,
    pub spec: DispersionSpec,
    pub theta: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEstimate {
    pub value: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    /// `sqrt(sum_j Var(g_j) / N)`, the standard error of the gradient vector.
    pub std_err: f64,
}

impl RiskGradOracle<'_> {
    pub fn evaluate(&self, model: &LinearModel) -> OracleEstimate {
        self.estimate(model, true)
    }

    /// Like [`evaluate`](Self::evaluate) but leaves `value` as NaN, which
    /// skips the costlier dispersion evaluation.
    pub fn evaluate_gradient(&self, model: &LinearModel) -> OracleEstimate {
        self.estimate(model, false)
    }

    fn estimate(&self, model: &LinearModel, with_value: bool) -> OracleEstimate {
        let k = model.classes;
        let d = model.dim;
        let n = self.sample.len() as f64;
        let mut coef = vec![0.0; k];
        let mut sum = vec![0.0; k * d];
        let mut sum_sq = vec![0.0; k * d];
        let mut value = 0.0;
        for (x, &y) in self.sample.features.chunks_exact(d).zip(&self.sample.targets) {
            let (loss, _) = self.base.eval(model, x, y, &mut coef);
            if with_value {
                value += self.spec.value(loss - self.theta);
            }
            let w = self.spec.slope(loss - self.theta);
            for ((&c, s), sq) in coef.iter().zip(sum.chunks_exact_mut(d)).zip(sum_sq.chunks_exact_mut(d)) {
                let c = w * c;
                for ((xi, s), sq) in x.iter().zip(s.iter_mut()).zip(sq.iter_mut()) {
                    let g = c * xi;
                    *s += g;
                    *sq += g * g;
                }
            }
        }
        let grad: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let var: f64 = sum_sq
            .iter()
            .zip(&grad)
            .map(|(sq, m)| (sq / n - m * m).max(0.0) * n / (n - 1.0).max(1.0))
            .sum();
        OracleEstimate {
            value: if with_value { self.eta * self.theta + value / n } else { f64::NAN },
            grad_norm: norm(&grad),
            grad,
            std_err: (var / n).sqrt(),
        }
    }
}

/// Terms of the high-probability stationarity bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    /// `(1/T) sum_t |grad R(h_t)|` from the oracle.
    pub lhs: f64,
    pub lhs_std_err: f64,
    pub c1: f64,
    pub c2: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `(c1, c2, rhs)` for `T` steps, confidence `1 - delta`, gradient bound
/// `gamma`, smoothness `l_hat`, and risk decrease `R(h_1) - R(h_{T+1})`.
pub fn theorem1_coefficients(steps: usize, delta: f64, gamma: f64, l_hat: f64, risk_drop: f64) -> (f64, f64, f64) {
    let t = steps as f64;
    let log_term = (3.0 * t / delta).ln();
    let c1 = risk_drop + 16.0 * gamma * log_term.sqrt() + 2.0 * l_hat;
    let c2 = 20.0 * gamma * log_term + 2.0 * gamma;
    let rhs = c1 / t.powf(0.25) + c2 / t.sqrt() + l_hat / (2.0 * t.powf(0.75));
    (c1, c2, rhs)
}

/// Evaluates both sides of the stationarity bound for `iterates = h_1..h_{T+1}`.
///
/// Fails with [`LearnError::Inconclusive`] when the oracle's standard error
/// on the left-hand side exceeds 5% of the right-hand side.
pub fn theorem1_bound(
    iterates: &[LinearModel],
    smoothness: &SmoothnessReport,
    delta: f64,
    oracle: &RiskGradOracle<'_>,
) -> Result<BoundCheck> {
    if iterates.len() < 2 {
        return Err(config_error("need h_1 through h_{T+1}"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(config_error("delta must lie in (0, 1)"));
    }
    let steps = iterates.len() - 1;
    let last = iterates.len() - 1;
    let estimates: Vec<OracleEstimate> = iterates
        .par_iter()
        .enumerate()
        .map(|(t, h)| if t == 0 || t == last { oracle.evaluate(h) } else { oracle.evaluate_gradient(h) })
        .collect();
    let t = steps as f64;
    let lhs = estimates[..steps].iter().map(|e| e.grad_norm).sum::<f64>() / t;
    let lhs_std_err = estimates[..steps].iter().map(|e| e.std_err).sum::<f64>() / t;
    let risk_drop = estimates[0].value - estimates[steps].value;
    let (c1, c2, rhs) = theorem1_coefficients(steps, delta, smoothness.gamma_hat, smoothness.l_hat, risk_drop);
    if lhs_std_err > 0.05 * rhs {
        return Err(LearnError::Inconclusive { std_err: lhs_std_err, bound: rhs });
    }
    Ok(BoundCheck {
        lhs,
        lhs_std_err,
        c1,
        c2,
        rhs,
        holds: lhs <= rhs,
    })
}

/// Whether the stationarity bound holds; see [`theorem1_bound`].
pub fn theorem1_bound_check(
    iterates: &[LinearModel],
    smoothness: &SmoothnessReport,
    delta: f64,
    oracle: &RiskGradOracle<'_>,
) -> Result<bool> {
    theorem1_bound(iterates, smoothness, delta, oracle).map(|c| c.holds)
}
