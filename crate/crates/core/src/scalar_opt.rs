//! Bounded scalar minimization.
//!
//! [`minimize_scalar`] is Brent's method on a closed bracket: golden-section
//! steps with parabolic interpolation when it is safe. [`grid_refine_oracle`]
//! is a deliberately naive coarse-to-fine grid search kept around as an
//! independent check in tests.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const GOLDEN: f64 = 0.381_966_011_250_105_1; // (3 - sqrt(5)) / 2
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalarOptError {
    #[error("invalid bracket [{lo}, {hi}]")]
    InvalidBracket { lo: f64, hi: f64 },
    #[error("objective returned a non-finite value at {at}")]
    NonFinite { at: f64 },
    #[error("no convergence after {iterations} iterations (best {best} with value {value})")]
    NoConvergence {
        iterations: usize,
        best: f64,
        value: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    lo: f64,
    hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ScalarOptError> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(ScalarOptError::InvalidBracket { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Default argument tolerance: `1e-10 * (1 + width)`.
    pub fn default_tol(&self) -> f64 {
        1e-10 * (1.0 + self.width())
    }
}

/// `[min - pad * range - 1, max + pad * range + 1]` around a nonempty sample.
pub fn default_bracket(values: &[f64], pad: f64) -> Bracket {
    debug_assert!(!values.is_empty());
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    Bracket {
        lo: lo - pad * range - 1.0,
        hi: hi + pad * range + 1.0,
    }
}

/// Result of a bounded minimization. `value == f(argmin)` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub argmin: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Tracks the best evaluated point, breaking exact ties toward smaller arguments.
#[derive(Clone, Copy)]
struct Best {
    x: f64,
    fx: f64,
}

impl Best {
    fn offer(&mut self, x: f64, fx: f64) {
        if fx < self.fx || (fx == self.fx && x < self.x) {
            self.x = x;
            self.fx = fx;
        }
    }
}

fn eval<F: FnMut(f64) -> f64>(f: &mut F, x: f64) -> Result<f64, ScalarOptError> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ScalarOptError::NonFinite { at: x })
    }
}

/// Minimize `f` on `bracket` to within `tol` in the argument.
///
/// The returned point is the lowest-valued point evaluated, so on flat
/// regions the smaller argument wins.
pub fn minimize_scalar<F>(
    mut f: F,
    bracket: Bracket,
    tol: f64,
    max_iter: usize,
) -> Result<Minimum, ScalarOptError>
where
    F: FnMut(f64) -> f64,
{
    let tol = if tol > 0.0 { tol } else { bracket.default_tol() };
    let sqrt_eps = f64::EPSILON.sqrt();
    let (mut a, mut b) = (bracket.lo, bracket.hi);

    let mut x = a + GOLDEN * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = eval(&mut f, x)?;
    let mut fw = fx;
    let mut fv = fx;
    let mut best = Best { x, fx };

    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for iter in 0..max_iter {
        let mid = 0.5 * (a + b);
        let tol1 = sqrt_eps * x.abs() * 1e-3 + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - mid).abs() <= tol2 - 0.5 * (b - a) {
            return Ok(Minimum {
                argmin: best.x,
                value: best.fx,
                iterations: iter,
            });
        }

        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < mid { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < mid { b - x } else { a - x };
            d = GOLDEN * e;
        }

        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = eval(&mut f, u)?;
        best.offer(u, fu);

        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Err(ScalarOptError::NoConvergence {
        iterations: max_iter,
        best: best.x,
        value: best.fx,
    })
}

/// [`minimize_scalar`] with the default tolerance and iteration cap.
pub fn minimize_default<F>(f: F, bracket: Bracket) -> Result<Minimum, ScalarOptError>
where
    F: FnMut(f64) -> f64,
{
    minimize_scalar(f, bracket, bracket.default_tol(), DEFAULT_MAX_ITER)
}

/// Exhaustive coarse-to-fine grid search; test oracle only.
///
/// Each level evaluates 1001 evenly spaced points and zooms into the two
/// cells around the best one.
pub fn grid_refine_oracle<F>(mut f: F, bracket: Bracket, levels: usize) -> Result<f64, ScalarOptError>
where
    F: FnMut(f64) -> f64,
{
    const POINTS: usize = 1001;
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let mut best = Best {
        x: lo,
        fx: f64::INFINITY,
    };
    for _ in 0..levels.max(1) {
        let step = (hi - lo) / (POINTS - 1) as f64;
        for i in 0..POINTS {
            let x = lo + step * i as f64;
            best.offer(x, eval(&mut f, x)?);
        }
        lo = (best.x - step).max(bracket.lo);
        hi = (best.x + step).min(bracket.hi);
        if hi <= lo {
            break;
        }
    }
    Ok(best.x)
}
