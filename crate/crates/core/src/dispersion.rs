//! Scaled Barron dispersion functions.
//!
//! For shape `alpha` in `[-inf, 2]` and scale `sigma > 0` the dispersion is
//! `rho_sigma(x) = rho(x / sigma; alpha)` with
//!
//! ```text
//! rho(x; 2)    = x^2 / 2
//! rho(x; 0)    = log(1 + x^2 / 2)
//! rho(x; -inf) = 1 - exp(-x^2 / 2)
//! rho(x; a)    = |a - 2| / a * ((1 + x^2 / |a - 2|)^(a / 2) - 1)   otherwise
//! ```
//!
//! Every derivative exposed here is taken with respect to `x` of the scaled
//! map, so `rho_d1 = rho'(x / sigma) / sigma` and `rho_d2 = rho''(x / sigma) / sigma^2`.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Shapes closer than this to 0 or 2 use the closed-form limit branch.
const SNAP: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("shape must be -inf or a finite value <= 2, got {0}")]
    InvalidShape(f64),
    #[error("dispersion evaluated at non-finite point {0}")]
    Domain(f64),
    #[error("derivatives are not available for the absolute-value dispersion")]
    Unsupported,
}

/// Barron shape parameter. `NegInfinity` is an explicit sentinel so branch
/// dispatch never depends on comparing against a huge negative float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    NegInfinity,
    Finite(f64),
}

impl Shape {
    pub fn new(alpha: f64) -> Result<Self, DispersionError> {
        if alpha == f64::NEG_INFINITY {
            Ok(Shape::NegInfinity)
        } else if alpha.is_finite() && alpha <= 2.0 {
            Ok(Shape::Finite(alpha))
        } else {
            Err(DispersionError::InvalidShape(alpha))
        }
    }

    /// The shape as a float, with `-inf` for the sentinel.
    pub fn as_f64(self) -> f64 {
        match self {
            Shape::NegInfinity => f64::NEG_INFINITY,
            Shape::Finite(a) => a,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::NegInfinity => f.write_str("-inf"),
            Shape::Finite(a) => write!(f, "{a}"),
        }
    }
}

impl Serialize for Shape {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Shape::NegInfinity => s.serialize_str("-inf"),
            Shape::Finite(a) => s.serialize_f64(*a),
        }
    }
}

impl<'de> Deserialize<'de> for Shape {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let alpha = match Raw::deserialize(d)? {
            Raw::Num(a) => a,
            Raw::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "-inf" | "-infinity" | "neg_inf" => f64::NEG_INFINITY,
                other => other
                    .parse::<f64>()
                    .map_err(|_| serde::de::Error::custom(format!("invalid shape {t:?}")))?,
            },
        };
        Shape::new(alpha).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionKind {
    Barron,
    /// `|x| / sigma`; only used to characterize quantiles, never differentiated.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Branch {
    Quadratic,
    Log,
    Gaussian,
    General { alpha: f64, gap: f64 },
    Absolute,
}

/// A validated dispersion function `x -> rho(x / sigma; alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DispersionConfig", into = "DispersionConfig")]
pub struct DispersionSpec {
    shape: Shape,
    sigma: f64,
    kind: DispersionKind,
    branch: Branch,
}

impl DispersionSpec {
    pub fn barron(alpha: f64, sigma: f64) -> Result<Self, DispersionError> {
        Self::with_shape(Shape::new(alpha)?, sigma)
    }

    pub fn with_shape(shape: Shape, sigma: f64) -> Result<Self, DispersionError> {
        check_scale(sigma)?;
        let branch = match shape {
            Shape::NegInfinity => Branch::Gaussian,
            Shape::Finite(a) if (a - 2.0).abs() < SNAP => Branch::Quadratic,
            Shape::Finite(a) if a.abs() < SNAP => Branch::Log,
            Shape::Finite(a) => Branch::General {
                alpha: a,
                gap: (a - 2.0).abs(),
            },
        };
        Ok(Self {
            shape,
            sigma,
            kind: DispersionKind::Barron,
            branch,
        })
    }

    pub fn absolute(sigma: f64) -> Result<Self, DispersionError> {
        check_scale(sigma)?;
        Ok(Self {
            shape: Shape::Finite(1.0),
            sigma,
            kind: DispersionKind::Absolute,
            branch: Branch::Absolute,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn alpha(&self) -> f64 {
        self.shape.as_f64()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kind(&self) -> DispersionKind {
        self.kind
    }

    /// Same shape and kind with a different scale.
    pub fn rescaled(&self, sigma: f64) -> Result<Self, DispersionError> {
        match self.kind {
            DispersionKind::Barron => Self::with_shape(self.shape, sigma),
            DispersionKind::Absolute => Self::absolute(sigma),
        }
    }

    /// Checked evaluation of `rho_sigma(x)`.
    pub fn rho(&self, x: f64) -> Result<f64, DispersionError> {
        finite(x)?;
        Ok(self.value(x))
    }

    /// Checked first derivative of `rho_sigma` at `x`.
    pub fn rho_d1(&self, x: f64) -> Result<f64, DispersionError> {
        self.differentiable()?;
        finite(x)?;
        Ok(self.slope(x))
    }

    /// Checked second derivative of `rho_sigma` at `x`.
    pub fn rho_d2(&self, x: f64) -> Result<f64, DispersionError> {
        self.differentiable()?;
        finite(x)?;
        Ok(self.curvature(x))
    }

    /// Unchecked `rho_sigma(x)`; NaN in, NaN out.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let z = x / self.sigma;
        let z2 = z * z;
        match self.branch {
            Branch::Quadratic => 0.5 * z2,
            Branch::Log => (0.5 * z2).ln_1p(),
            Branch::Gaussian => -(-0.5 * z2).exp_m1(),
            Branch::General { alpha, gap } => {
                gap / alpha * (0.5 * alpha * (z2 / gap).ln_1p()).exp_m1()
            }
            Branch::Absolute => z.abs(),
        }
    }

    /// Unchecked first derivative. For the absolute kind this is the
    /// subgradient `sign(x) / sigma` (zero at the kink).
    #[inline]
    pub fn slope(&self, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let z = x / self.sigma;
        let z2 = z * z;
        match self.branch {
            Branch::Quadratic => x / s2,
            Branch::Log => 2.0 * x / (x * x + 2.0 * s2),
            Branch::Gaussian => x / s2 * (-0.5 * z2).exp(),
            Branch::General { alpha, gap } => {
                x / s2 * ((0.5 * alpha - 1.0) * (z2 / gap).ln_1p()).exp()
            }
            Branch::Absolute => {
                if x == 0.0 {
                    0.0
                } else {
                    x.signum() / self.sigma
                }
            }
        }
    }

    /// Unchecked second derivative (zero for the absolute kind away from 0).
    #[inline]
    pub fn curvature(&self, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        let z = x / self.sigma;
        let z2 = z * z;
        match self.branch {
            Branch::Quadratic => 1.0 / s2,
            Branch::Log => {
                let q = x * x + 2.0 * s2;
                2.0 / q * (1.0 - 2.0 * x * x / q)
            }
            Branch::Gaussian => (-0.5 * z2).exp() * (1.0 - z2) / s2,
            Branch::General { alpha, gap } => {
                let base = 1.0 + z2 / gap;
                let power = ((0.5 * alpha - 1.0) * (z2 / gap).ln_1p()).exp();
                power / s2 * (1.0 - (1.0 - 0.5 * alpha) / gap * 2.0 * z2 / base)
            }
            Branch::Absolute => 0.0,
        }
    }

    /// Tight Lipschitz constant of `rho_sigma` (infinite for `alpha > 1`).
    pub fn lipschitz_coeff(&self) -> f64 {
        let s = self.sigma;
        match self.branch {
            Branch::Quadratic => f64::INFINITY,
            Branch::Log => 1.0 / (std::f64::consts::SQRT_2 * s),
            Branch::Gaussian => (-0.5f64).exp() / s,
            Branch::General { alpha, gap } => {
                if alpha > 1.0 {
                    f64::INFINITY
                } else if alpha == 1.0 {
                    1.0 / s
                } else {
                    ((1.0 - alpha) / gap).sqrt().powf(1.0 - alpha) / s
                }
            }
            Branch::Absolute => 1.0 / s,
        }
    }

    /// Smoothness constant `1 / sigma^2`, shared by every shape.
    pub fn smoothness_coeff(&self) -> f64 {
        match self.kind {
            DispersionKind::Barron => 1.0 / (self.sigma * self.sigma),
            DispersionKind::Absolute => f64::INFINITY,
        }
    }

    /// Half-width of the interval around zero on which `rho_sigma` is convex.
    pub fn convexity_radius(&self) -> f64 {
        match self.branch {
            Branch::Quadratic | Branch::Absolute => f64::INFINITY,
            Branch::Log => std::f64::consts::SQRT_2 * self.sigma,
            Branch::Gaussian => self.sigma,
            Branch::General { alpha, gap } => {
                if alpha >= 1.0 {
                    f64::INFINITY
                } else {
                    self.sigma * (gap / (1.0 - alpha)).sqrt()
                }
            }
        }
    }

    /// `lim_{|x| -> inf} rho_sigma(x)`: finite only for negative shapes.
    pub fn supremum(&self) -> f64 {
        match self.branch {
            Branch::Gaussian => 1.0,
            Branch::General { alpha, gap } if alpha < 0.0 => gap / alpha.abs(),
            _ => f64::INFINITY,
        }
    }

    /// `sup |rho'|` of the unscaled function, i.e. `sigma * lipschitz_coeff`.
    pub fn unscaled_slope_bound(&self) -> f64 {
        self.sigma * self.lipschitz_coeff()
    }

    fn differentiable(&self) -> Result<(), DispersionError> {
        match self.kind {
            DispersionKind::Barron => Ok(()),
            DispersionKind::Absolute => Err(DispersionError::Unsupported),
        }
    }
}

impl fmt::Display for DispersionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DispersionKind::Barron => write!(f, "barron(alpha={}, sigma={})", self.shape, self.sigma),
            DispersionKind::Absolute => write!(f, "absolute(sigma={})", self.sigma),
        }
    }
}

fn check_scale(sigma: f64) -> Result<(), DispersionError> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(DispersionError::InvalidScale(sigma))
    }
}

fn finite(x: f64) -> Result<(), DispersionError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(DispersionError::Domain(x))
    }
}

/// Serializable description of a dispersion, used by configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionConfig {
    pub alpha: Shape,
    pub sigma: f64,
    #[serde(default = "default_kind")]
    pub kind: DispersionKind,
}

fn default_kind() -> DispersionKind {
    DispersionKind::Barron
}

impl DispersionConfig {
    pub fn build(&self) -> Result<DispersionSpec, DispersionError> {
        match self.kind {
            DispersionKind::Barron => DispersionSpec::with_shape(self.alpha, self.sigma),
            DispersionKind::Absolute => DispersionSpec::absolute(self.sigma),
        }
    }
}

impl From<DispersionSpec> for DispersionConfig {
    fn from(spec: DispersionSpec) -> Self {
        Self {
            alpha: spec.shape,
            sigma: spec.sigma,
            kind: spec.kind,
        }
    }
}

impl TryFrom<DispersionConfig> for DispersionSpec {
    type Error = DispersionError;

    fn try_from(config: DispersionConfig) -> Result<Self, Self::Error> {
        config.build()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SHAPES: [f64; 10] = [
        f64::NEG_INFINITY,
        -4.0,
        -2.0,
        -1.0,
        -0.5,
        0.0,
        0.5,
        1.0,
        1.5,
        2.0,
    ];

    fn spec(alpha: f64, sigma: f64) -> DispersionSpec {
        DispersionSpec::barron(alpha, sigma).unwrap()
    }

    #[test]
    fn closed_form_values() {
        for &a in &SHAPES {
            assert_eq!(spec(a, 0.7).rho(0.0).unwrap(), 0.0);
        }
        assert_eq!(spec(2.0, 1.0).rho(2.0).unwrap(), 2.0);
        let v = spec(0.0, 1.0).rho(2f64.sqrt()).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        let v = spec(1.0, 1.0).rho(3f64.sqrt()).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_examples() {
        for &a in &SHAPES {
            for &s in &[0.2, 1.0, 5.0] {
                let d = spec(a, s);
                assert_eq!(d.rho_d1(0.0).unwrap(), 0.0);
                let c = d.rho_d2(0.0).unwrap();
                assert!((c - 1.0 / (s * s)).abs() <= 1e-12 / (s * s), "alpha={a} sigma={s}");
            }
        }
        assert!((spec(2.0, 0.5).rho_d1(1.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(spec(f64::NEG_INFINITY, 1.3).rho_d2(1.3).unwrap().abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters() {
        assert_eq!(
            DispersionSpec::barron(2.5, 1.0),
            Err(DispersionError::InvalidShape(2.5))
        );
        assert!(DispersionSpec::barron(f64::NAN, 1.0).is_err());
        assert!(DispersionSpec::barron(f64::INFINITY, 1.0).is_err());
        assert_eq!(
            DispersionSpec::barron(1.0, 0.0),
            Err(DispersionError::InvalidScale(0.0))
        );
        assert!(DispersionSpec::barron(1.0, -1.0).is_err());
        assert!(matches!(
            spec(1.0, 1.0).rho(f64::NAN),
            Err(DispersionError::Domain(_))
        ));
        assert!(spec(1.0, 1.0).rho(f64::INFINITY).is_err());
    }

    #[test]
    fn absolute_kind_has_no_derivatives() {
        let d = DispersionSpec::absolute(2.0).unwrap();
        assert_eq!(d.rho(-3.0).unwrap(), 1.5);
        assert_eq!(d.rho_d1(1.0), Err(DispersionError::Unsupported));
        assert_eq!(d.rho_d2(1.0), Err(DispersionError::Unsupported));
    }

    #[test]
    fn analytic_constants() {
        assert_eq!(spec(1.0, 2.0).lipschitz_coeff(), 0.5);
        assert_eq!(spec(2.0, 1.0).lipschitz_coeff(), f64::INFINITY);
        assert!((spec(f64::NEG_INFINITY, 1.0).lipschitz_coeff() - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert!((spec(0.0, 1.0).lipschitz_coeff() - 1.0 / 2f64.sqrt()).abs() < 1e-15);

        assert_eq!(spec(0.3, 1.0).smoothness_coeff(), 1.0);
        assert!((spec(-3.0, 0.2).smoothness_coeff() - 25.0).abs() < 1e-12);
        assert!((spec(1.5, 10.0).smoothness_coeff() - 0.01).abs() < 1e-15);

        assert!((spec(0.0, 1.0).convexity_radius() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(spec(f64::NEG_INFINITY, 3.0).convexity_radius(), 3.0);
        assert_eq!(spec(1.5, 1.0).convexity_radius(), f64::INFINITY);
        // the general formula reproduces the special branches
        let near_zero = spec(1e-7, 1.0).convexity_radius();
        assert!((near_zero - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn snapping_near_special_shapes() {
        let q = spec(2.0 - 1e-10, 1.0);
        assert_eq!(q.rho(3.0).unwrap(), 4.5);
        let l = spec(5e-10, 1.0);
        assert_eq!(l.rho(1.0).unwrap(), 1.5f64.ln());
    }

    #[test]
    fn limits_in_shape() {
        let xs: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.25).collect();
        // (near shape, limit shape)
        let pairs = [
            (2.0 - 1e-6, 2.0),
            (1e-6, 0.0),
            (-1e-6, 0.0),
        ];
        for (near, lim) in pairs {
            for &x in &xs {
                let a = spec(near, 1.0).rho(x).unwrap();
                let b = spec(lim, 1.0).rho(x).unwrap();
                // first-order gap is about delta * x^2 log(x^2)
                assert!((a - b).abs() < 1e-4 * (1.0 + b.abs()), "alpha={near} x={x}: {a} vs {b}");
            }
        }
        // The -inf limit converges like 1/|alpha|; check the gap shrinks.
        let mut prev = f64::INFINITY;
        for k in 1..=7 {
            let alpha = -(10f64.powi(k));
            let gap = xs
                .iter()
                .map(|&x| (spec(alpha, 1.0).value(x) - spec(f64::NEG_INFINITY, 1.0).value(x)).abs())
                .fold(0.0, f64::max);
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn general_branch_survives_large_arguments() {
        let d = spec(-3.0, 0.1);
        let v = d.rho(1e300).unwrap();
        assert!((v - d.supremum()).abs() < 1e-12);
        assert!(d.slope(1e300).is_finite());
        assert!(spec(1.5, 1.0).rho(1e150).unwrap().is_finite());
    }

    #[test]
    fn supremum_of_bounded_shapes() {
        for &a in &[-0.5, -2.0, -7.0] {
            let d = spec(a, 1.0);
            let far = d.value(1e12);
            assert!((far - (a - 2.0f64).abs() / a.abs()).abs() < 1e-3);
            assert_eq!(d.supremum(), (a - 2.0f64).abs() / a.abs());
        }
        assert_eq!(spec(f64::NEG_INFINITY, 1.0).supremum(), 1.0);
        assert_eq!(spec(0.0, 1.0).supremum(), f64::INFINITY);
    }

    #[test]
    fn shape_serde() {
        let s: Shape = serde_json::from_str("\"-inf\"").unwrap();
        assert_eq!(s, Shape::NegInfinity);
        let s: Shape = serde_json::from_str("1.5").unwrap();
        assert_eq!(s, Shape::Finite(1.5));
        assert!(serde_json::from_str::<Shape>("3.0").is_err());
        assert_eq!(serde_json::to_string(&Shape::NegInfinity).unwrap(), "\"-inf\"");
    }

    fn shape_strategy() -> impl Strategy<Value = f64> {
        prop_oneof![
            Just(f64::NEG_INFINITY),
            Just(0.0),
            Just(1.0),
            Just(2.0),
            -10.0..2.0f64,
        ]
    }

    proptest! {
        #[test]
        fn even_nonnegative(alpha in shape_strategy(), sigma in 0.05..20.0f64, x in -1e3..1e3f64) {
            let d = spec(alpha, sigma);
            let a = d.value(x);
            prop_assert!(a >= 0.0);
            prop_assert_eq!(a, d.value(-x));
            prop_assert_eq!(d.slope(x), -d.slope(-x));
        }

        #[test]
        fn slope_envelopes(alpha in shape_strategy(), sigma in 0.05..20.0f64, x in -1e3..1e3f64) {
            let d = spec(alpha, sigma);
            let g = d.slope(x).abs();
            prop_assert!(g <= d.lipschitz_coeff() * (1.0 + 1e-12));
            prop_assert!(g <= x.abs() / (sigma * sigma) * (1.0 + 1e-12));
            prop_assert!(d.curvature(x).abs() <= d.smoothness_coeff() * (1.0 + 1e-12));
        }

        #[test]
        fn convex_exactly_inside_radius(alpha in shape_strategy(), sigma in 0.05..20.0f64, t in 0.0..3.0f64) {
            let d = spec(alpha, sigma);
            let r = d.convexity_radius();
            if r.is_finite() {
                let x = t * r;
                let c = d.curvature(x);
                if t < 1.0 - 1e-9 {
                    prop_assert!(c >= 0.0);
                } else if t > 1.0 + 1e-9 {
                    prop_assert!(c < 0.0);
                }
            } else {
                prop_assert!(d.curvature(t * 10.0 * sigma) >= 0.0);
            }
        }
    }
}
