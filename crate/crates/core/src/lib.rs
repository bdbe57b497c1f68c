//! Probabilistic extrapolation of numerical-method outputs to the
//! infinite-resolution limit.
//!
//! A numerical method is run at several resolutions `h`, producing outputs
//! `q(h, t)`. A Gaussian process on `(h, t)` whose error component vanishes
//! like `h^alpha` is conditioned on those outputs, and the posterior at
//! `h = 0` gives an estimate of the exact quantity with uncertainty.

pub mod classical;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod likelihood;
mod linalg;
pub mod metrics;
mod optim;
pub mod posterior;
pub mod problems;

pub use dataset::{augment_cumulative, Dataset, Datum, HParameterization, Ordinate};
pub use error::{BbpnError, Result};
pub use kernel::{BasisSet, GpPrior, Hyperparameters, RadialProfile};
pub use likelihood::{fit, FitConfig, FitResult};
pub use posterior::{condition, credible_band, ConditionedModel, LimitPosterior};
