//! Risk functionals evaluated on an empirical loss sample.
//!
//! All functions treat the sample as a uniform discrete distribution and are
//! deterministic. Thresholds are found with [`crate::scalar_opt`]; for
//! T-risks with a convex dispersion the solver result is polished with a
//! safeguarded Newton iteration on the first-order condition
//! `mean rho'(l - theta) = eta`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::{DispersionError, DispersionKind, DispersionSpec};
use crate::scalar_opt::{self, default_bracket, Bracket, ScalarOptError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("loss sample is empty")]
    Empty,
    #[error("loss sample has a non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("minimal T-risk is unbounded below for {spec} with eta={eta}")]
    UnboundedBelow { spec: DispersionSpec, eta: f64 },
    #[error(transparent)]
    Solver(#[from] ScalarOptError),
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
}

pub type Result<T> = std::result::Result<T, RiskError>;

/// A nonempty sample of finite losses.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLoss {
    values: Vec<f64>,
}

impl EmpiricalLoss {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(RiskError::Empty);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RiskError::NonFinite { index });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Variance with the `1/n` convention.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The sample `-L`.
    pub fn negated(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    /// The sample `L + c`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

impl TryFrom<Vec<f64>> for EmpiricalLoss {
    type Error = RiskError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// One risk family together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RiskParams {
    #[serde(rename = "trisk")]
    TRisk {
        spec: DispersionSpec,
        theta: f64,
        eta: f64,
    },
    #[serde(rename = "minimal_trisk")]
    MinimalTRisk { spec: DispersionSpec, eta: f64 },
    MLocation { spec: DispersionSpec },
    #[serde(rename = "cvar")]
    CVaR { beta: f64 },
    Tilted { gamma: f64 },
    #[serde(rename = "dro")]
    CressieReadDRO {
        #[serde(default = "default_dro_c")]
        c: f64,
        a_tilde: f64,
    },
}

fn default_dro_c() -> f64 {
    2.0
}

impl RiskParams {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RiskParams::MinimalTRisk { spec, eta } => check_minimal(&spec, eta),
            RiskParams::CVaR { beta } => check_beta(beta),
            RiskParams::Tilted { gamma } => check_gamma(gamma),
            RiskParams::CressieReadDRO { c, a_tilde } => check_dro(c, a_tilde),
            RiskParams::TRisk { theta, eta, .. } => {
                if theta.is_finite() && eta.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("theta and eta must be finite"))
                }
            }
            RiskParams::MLocation { .. } => Ok(()),
        }
    }

    /// Short family label used in CSV output.
    pub fn family(&self) -> &'static str {
        match self {
            RiskParams::TRisk { .. } => "trisk",
            RiskParams::MinimalTRisk { .. } => "minimal_trisk",
            RiskParams::MLocation { .. } => "m_location",
            RiskParams::CVaR { .. } => "cvar",
            RiskParams::Tilted { .. } => "tilted",
            RiskParams::CressieReadDRO { .. } => "dro",
        }
    }
}

fn invalid(msg: impl Into<String>) -> RiskError {
    RiskError::InvalidParameter(msg.into())
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(invalid(format!("beta must lie in [0, 1), got {beta}")))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma != 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("gamma must be finite and nonzero, got {gamma}")))
    }
}

fn check_dro(c: f64, a_tilde: f64) -> Result<()> {
    if !(c > 1.0 && c.is_finite()) {
        return Err(invalid(format!("c must exceed 1, got {c}")));
    }
    if !(0.0..1.0).contains(&a_tilde) {
        return Err(invalid(format!("a_tilde must lie in [0, 1), got {a_tilde}")));
    }
    Ok(())
}

/// Minimal T-risk is finite iff the shape is above 1, or equal to 1 with `|eta| < 1 / sigma`.
fn check_minimal(spec: &DispersionSpec, eta: f64) -> Result<()> {
    if !eta.is_finite() {
        return Err(invalid("eta must be finite"));
    }
    let bounded = match spec.kind() {
        DispersionKind::Absolute => eta.abs() < 1.0 / spec.sigma(),
        DispersionKind::Barron => {
            let a = spec.alpha();
            a > 1.0 || (a == 1.0 && eta.abs() < 1.0 / spec.sigma())
        }
    };
    if bounded {
        Ok(())
    } else {
        Err(RiskError::UnboundedBelow { spec: *spec, eta })
    }
}

/// `mean rho_sigma(l - theta)`.
pub fn dispersion_mean(losses: &EmpiricalLoss, spec: &DispersionSpec, theta: f64) -> f64 {
    let n = losses.len() as f64;
    losses.values.iter().map(|&l| spec.value(l - theta)).sum::<f64>() / n
}

fn slope_mean(losses: &EmpiricalLoss, spec: &DispersionSpec, theta: f64) -> f64 {
    let n = losses.len() as f64;
    losses.values.iter().map(|&l| spec.slope(l - theta)).sum::<f64>() / n
}

fn curvature_mean(losses: &EmpiricalLoss, spec: &DispersionSpec, theta: f64) -> f64 {
    let n = losses.len() as f64;
    losses.values.iter().map(|&l| spec.curvature(l - theta)).sum::<f64>() / n
}

/// T-risk `eta * theta + mean rho_sigma(l - theta)`.
pub fn trisk(losses: &EmpiricalLoss, spec: &DispersionSpec, theta: f64, eta: f64) -> f64 {
    eta * theta + dispersion_mean(losses, spec, theta)
}

/// Optimal threshold and the minimal T-risk value attained there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimalTRisk {
    pub value: f64,
    pub theta_star: f64,
}

/// Widen `[lo, hi]` until the derivative of the (convex) threshold objective
/// `eta - mean rho'(l - theta)` is nonpositive at `lo` and nonnegative at `hi`.
fn sign_bracket(losses: &EmpiricalLoss, spec: &DispersionSpec, eta: f64) -> Result<Bracket> {
    let start = default_bracket(losses.values(), 1.0);
    let deriv = |t: f64| eta - slope_mean(losses, spec, t);
    let (mut lo, mut hi) = (start.lo(), start.hi());
    let mut step = hi - lo;
    for _ in 0..200 {
        if deriv(lo) <= 0.0 {
            break;
        }
        lo -= step;
        step *= 2.0;
    }
    let mut step = hi - lo;
    for _ in 0..200 {
        if deriv(hi) >= 0.0 {
            break;
        }
        hi += step;
        step *= 2.0;
    }
    Ok(Bracket::new(lo, hi)?)
}

/// Safeguarded Newton on `eta = mean rho'(l - theta)`, kept inside `bracket`.
fn polish_threshold(
    losses: &EmpiricalLoss,
    spec: &DispersionSpec,
    eta: f64,
    mut theta: f64,
    bracket: Bracket,
) -> f64 {
    if spec.kind() != DispersionKind::Barron {
        return theta;
    }
    let objective = |t: f64| trisk(losses, spec, t, eta);
    let mut best = objective(theta);
    for _ in 0..50 {
        let g = eta - slope_mean(losses, spec, theta);
        let h = curvature_mean(losses, spec, theta);
        if !(h > 0.0) || g == 0.0 {
            break;
        }
        let next = theta - g / h;
        if !(next > bracket.lo() && next < bracket.hi()) {
            break;
        }
        let value = objective(next);
        if value > best + 1e-12 * (1.0 + best.abs()) {
            break;
        }
        let moved = (next - theta).abs();
        theta = next;
        best = best.min(value);
        if moved <= 1e-15 * (1.0 + theta.abs()) {
            break;
        }
    }
    theta
}

fn threshold_search(losses: &EmpiricalLoss, spec: &DispersionSpec, eta: f64) -> Result<f64> {
    if losses.min() == losses.max() && eta == 0.0 {
        return Ok(losses.min());
    }
    let convex = match spec.kind() {
        DispersionKind::Barron => spec.alpha() >= 1.0,
        DispersionKind::Absolute => true,
    };
    let bracket = if convex {
        sign_bracket(losses, spec, eta)?
    } else {
        default_bracket(losses.values(), 1.0)
    };
    let found = scalar_opt::minimize_default(|t| trisk(losses, spec, t, eta), bracket)?;
    Ok(polish_threshold(losses, spec, eta, found.argmin, bracket))
}

/// M-location: a minimizer of `theta -> mean rho_sigma(l - theta)`.
///
/// Unique for shapes `>= 1`. For smaller shapes the objective can be
/// multimodal and this returns the solver's minimizer within the default
/// bracket.
pub fn m_location(losses: &EmpiricalLoss, spec: &DispersionSpec) -> Result<f64> {
    threshold_search(losses, spec, 0.0)
}

/// Minimal T-risk `inf_theta eta * theta + mean rho_sigma(l - theta)` and its minimizer.
pub fn minimal_trisk(losses: &EmpiricalLoss, spec: &DispersionSpec, eta: f64) -> Result<MinimalTRisk> {
    check_minimal(spec, eta)?;
    let theta_star = threshold_search(losses, spec, eta)?;
    Ok(MinimalTRisk {
        value: trisk(losses, spec, theta_star, eta),
        theta_star,
    })
}

/// Lower `beta`-quantile `inf { x : F(x) >= beta }` of the empirical distribution.
pub fn quantile(losses: &EmpiricalLoss, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(quantile_sorted(&losses.sorted(), beta))
}

fn quantile_sorted(sorted: &[f64], beta: f64) -> f64 {
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .find(|(i, _)| (*i + 1) as f64 / n >= beta)
        .map(|(_, &v)| v)
        .unwrap_or(sorted[sorted.len() - 1])
}

/// Conditional value-at-risk from order statistics.
///
/// Computes `q + mean (l - q)_+ / (1 - beta)` at the lower quantile `q`,
/// which splits the atom at `q` so that only a `beta`-fraction of the mass is
/// discarded. For a sample without ties at `q` this is the mean of the losses
/// at or above `q` with fractional weight on `q` itself.
pub fn cvar(losses: &EmpiricalLoss, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let sorted = losses.sorted();
    let q = quantile_sorted(&sorted, beta);
    let n = sorted.len() as f64;
    let excess = sorted.iter().map(|&l| (l - q).max(0.0)).sum::<f64>() / n;
    Ok(q + excess / (1.0 - beta))
}

/// CVaR through its variational form `inf_theta theta + mean (l - theta)_+ / (1 - beta)`.
pub fn cvar_variational(losses: &EmpiricalLoss, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let n = losses.len() as f64;
    let objective = |t: f64| {
        t + losses.values.iter().map(|&l| (l - t).max(0.0)).sum::<f64>() / (n * (1.0 - beta))
    };
    let bracket = Bracket::new(losses.min() - 1.0, losses.max() + 1.0)?;
    Ok(scalar_opt::minimize_default(objective, bracket)?.value)
}

/// Tilted (entropic) risk `log(mean exp(gamma * l)) / gamma`, computed with a max shift.
pub fn tilted(losses: &EmpiricalLoss, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(log_mean_exp(losses.values(), gamma) / gamma)
}

fn log_mean_exp(values: &[f64], gamma: f64) -> f64 {
    let shift = values
        .iter()
        .map(|&l| gamma * l)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|&l| (gamma * l - shift).exp()).sum();
    shift + (sum / values.len() as f64).ln()
}

/// Confirms that the tilted risk is both the minimizer and the minimum of
/// its OCE objective `theta + (mean exp(gamma (l - theta)) - 1) / gamma`
/// (to within `1e-6`).
pub fn tilted_threshold_identity_check(losses: &EmpiricalLoss, gamma: f64) -> Result<bool> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    let target = tilted(losses, gamma)?;
    let top = losses.max();
    let shifted: Vec<f64> = losses.values.iter().map(|&l| (gamma * (l - top)).exp()).collect();
    let base = shifted.iter().sum::<f64>() / shifted.len() as f64;
    let objective = |t: f64| t + ((gamma * (top - t)).exp() * base - 1.0) / gamma;
    let bracket = Bracket::new(losses.min() - 1.0, top + 1.0)?;
    let found = scalar_opt::minimize_default(objective, bracket)?;
    Ok((found.argmin - target).abs() <= 1e-6 && (found.value - target).abs() <= 1e-6)
}

/// Radius `a = ((1 - a_tilde)^-1 - 1)^2 / 2` of the divergence ball.
pub fn dro_radius(a_tilde: f64) -> f64 {
    let r = 1.0 / (1.0 - a_tilde) - 1.0;
    0.5 * r * r
}

/// Cressie-Read DRO risk through its one-dimensional dual
/// `inf_theta theta + (1 + c (c - 1) a)^(1/c) (mean (l - theta)_+^(c*))^(1/c*)`,
/// `c* = c / (c - 1)`. With `a_tilde = 0` the ball is a single point and the
/// risk is the sample mean. `c = 2` gives the chi-square DRO risk.
pub fn dro_risk(losses: &EmpiricalLoss, c: f64, a_tilde: f64) -> Result<f64> {
    check_dro(c, a_tilde)?;
    let a = dro_radius(a_tilde);
    if a == 0.0 {
        return Ok(losses.mean());
    }
    let c_star = c / (c - 1.0);
    let scale = (1.0 + c * (c - 1.0) * a).powf(1.0 / c);
    let objective = |t: f64| t + scale * power_mean_excess(losses.values(), t, c_star);

    // The objective is convex and equals theta above the sample maximum, so
    // only the lower end may need widening.
    let hi = losses.max();
    let mut lo = losses.min() - (hi - losses.min()) - 1.0;
    for _ in 0..60 {
        let bracket = Bracket::new(lo, hi + 1.0)?;
        let found = scalar_opt::minimize_default(objective, bracket)?;
        if found.argmin - lo > 1e-3 * bracket.width() {
            return Ok(found.value);
        }
        lo -= 4.0 * bracket.width();
    }
    Err(ScalarOptError::NoConvergence {
        iterations: 60,
        best: lo,
        value: objective(lo),
    }
    .into())
}

/// `(mean (l - t)_+^p)^(1/p)`, scaled by the largest excess to avoid overflow.
fn power_mean_excess(values: &[f64], t: f64, p: f64) -> f64 {
    let top = values.iter().map(|&l| l - t).fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    let n = values.len() as f64;
    let sum: f64 = if p == 2.0 {
        values
            .iter()
            .map(|&l| {
                let u = (l - t).max(0.0) / top;
                u * u
            })
            .sum()
    } else {
        values.iter().map(|&l| ((l - t).max(0.0) / top).powf(p)).sum()
    };
    top * (sum / n).powf(1.0 / p)
}

/// Evaluate any risk family. M-location returns the location itself.
pub fn risk_eval(losses: &EmpiricalLoss, params: &RiskParams) -> Result<f64> {
    params.validate()?;
    match *params {
        RiskParams::TRisk { spec, theta, eta } => Ok(trisk(losses, &spec, theta, eta)),
        RiskParams::MinimalTRisk { spec, eta } => Ok(minimal_trisk(losses, &spec, eta)?.value),
        RiskParams::MLocation { spec } => m_location(losses, &spec),
        RiskParams::CVaR { beta } => cvar(losses, beta),
        RiskParams::Tilted { gamma } => tilted(losses, gamma),
        RiskParams::CressieReadDRO { c, a_tilde } => dro_risk(losses, c, a_tilde),
    }
}
