//! Threshold risks (T-risks) built on the Barron family of dispersion
//! functions, the usual comparison risks (CVaR, tilted, Cressie-Read DRO),
//! and gradient-based linear learners driven by transformed losses.
//!
//! Layout:
//! - [`dispersion`]: the scaled Barron function, its derivatives and
//!   analytic Lipschitz/smoothness/convexity constants.
//! - [`scalar_opt`]: bounded one-dimensional minimization.
//! - [`risks`]: risk functionals evaluated on an empirical loss sample.
//! - [`learn`]: linear models, base losses, and the three training drivers.
//! - [`data`]: seeded samplers and dataset loaders.
//! - [`cli`]: experiment subcommands that write CSV output.

pub mod cli;
pub mod data;
pub mod dispersion;
pub mod learn;
pub mod risks;
pub mod scalar_opt;

pub use dispersion::{DispersionError, DispersionKind, DispersionSpec, Shape};
pub use risks::{EmpiricalLoss, RiskError, RiskParams};
pub use scalar_opt::{Bracket, ScalarOptError};
