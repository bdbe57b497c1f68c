//! Built-in numerical methods that produce multi-resolution data.

pub mod eigen;
pub mod kse;
pub mod ode;
pub mod quadrature;
pub mod tensor;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, HParameterization, Ordinate};
use crate::error::{BbpnError, Result};

pub use eigen::{LaplacianSpec, QrLaplacianAdapter};
pub use kse::{InitialCondition, KseAdapter, KseConfig};
pub use ode::{LotkaVolterraAdapter, OdeMethod};
pub use quadrature::RiemannAdapter;
pub use tensor::TensorAdapter;

/// Uniform interface over the numerical methods.
pub trait ProblemAdapter: Send + Sync {
    fn name(&self) -> &str;

    /// Outputs `(t, q(h, t))` of one run at resolution `h`. Deterministic.
    fn run(&self, h: f64) -> Result<Vec<(Ordinate, f64)>>;

    /// Theoretical order of the method, when known.
    fn order_hint(&self) -> Option<f64>;

    /// Number of ordinate blocks.
    fn p(&self) -> usize;

    /// Default query ordinates for the limit posterior.
    fn query(&self) -> Vec<Ordinate>;

    /// Exact or reference limit at `t`, when available.
    fn truth(&self, t: &Ordinate) -> Result<Option<f64>>;
}

/// Runs the adapter at every resolution (concurrently, results in input order).
pub fn generate_runs(adapter: &dyn ProblemAdapter, h_grid: &[f64]) -> Result<Vec<Dataset>> {
    h_grid
        .par_iter()
        .map(|&h| Dataset::from_run(h, adapter.run(h)?))
        .collect()
}

/// Truth values at the given ordinates, or `None` if any is unavailable.
pub fn truth_vector(adapter: &dyn ProblemAdapter, query: &[Ordinate]) -> Result<Option<Vec<f64>>> {
    let mut out = Vec::with_capacity(query.len());
    for t in query {
        match adapter.truth(t)? {
            Some(v) => out.push(v),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

fn default_y0() -> [f64; 2] {
    [20.0, 20.0]
}

fn default_t_end() -> f64 {
    20.0
}

fn default_reference_step() -> f64 {
    1e-4
}

fn default_interval() -> (f64, f64) {
    (0.0, 1.0)
}

fn default_stride() -> usize {
    1
}

fn default_tensor_reference() -> usize {
    200_000
}

/// Serializable description of a problem, used by experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Riemann {
        #[serde(default = "default_interval")]
        interval: (f64, f64),
    },
    LotkaVolterra {
        #[serde(default)]
        method: OdeMethod,
        #[serde(default = "default_y0")]
        y0: [f64; 2],
        #[serde(default = "default_t_end")]
        t_end: f64,
        #[serde(default = "default_reference_step")]
        reference_step: f64,
    },
    QrLaplacian {
        l: usize,
        m: usize,
    },
    TensorPower {
        order: usize,
        dim: usize,
        seed: u64,
        shift: Option<f64>,
        #[serde(default = "default_tensor_reference")]
        reference_iterations: usize,
    },
    Kse {
        #[serde(flatten)]
        config: KseConfig,
        reference_dt: f64,
        #[serde(default = "default_stride")]
        stride: usize,
    },
}

impl ProblemSpec {
    /// Family name used for CLI dispatch.
    pub fn family(&self) -> &'static str {
        match self {
            ProblemSpec::Riemann { .. } => "riemann",
            ProblemSpec::LotkaVolterra { .. } => "ode",
            ProblemSpec::QrLaplacian { .. } => "eigen-qr",
            ProblemSpec::TensorPower { .. } => "eigen-tensor",
            ProblemSpec::Kse { .. } => "pde-kse",
        }
    }

    pub fn build(&self, parameterization: HParameterization) -> Result<Box<dyn ProblemAdapter>> {
        Ok(match self {
            ProblemSpec::Riemann { interval } => Box::new(RiemannAdapter {
                a: interval.0,
                b: interval.1,
            }),
            ProblemSpec::LotkaVolterra {
                method,
                y0,
                t_end,
                reference_step,
            } => Box::new(LotkaVolterraAdapter::new(*method, *y0, *t_end, *reference_step)),
            ProblemSpec::QrLaplacian { l, m } => {
                Box::new(QrLaplacianAdapter::new(LaplacianSpec { l: *l, m: *m }, parameterization)?)
            }
            ProblemSpec::TensorPower {
                order,
                dim,
                seed,
                shift,
                reference_iterations,
            } => {
                let mut ad = TensorAdapter::seeded(*order, *dim, *seed, *shift, parameterization)?;
                ad.reference_iterations = *reference_iterations;
                Box::new(ad)
            }
            ProblemSpec::Kse {
                config,
                reference_dt,
                stride,
            } => Box::new(KseAdapter::new(config.clone(), *reference_dt, *stride)?),
        })
    }

    /// Randomised instance for repetition studies. Only problems with a natural
    /// source of randomness support this.
    pub fn perturbed(&self, seed: u64) -> Result<ProblemSpec> {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        match self {
            ProblemSpec::LotkaVolterra {
                method,
                y0,
                t_end,
                reference_step,
            } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let jitter = |v: f64, rng: &mut rand_chacha::ChaCha8Rng| {
                    let z: f64 = StandardNormal.sample(rng);
                    v * (0.1 * z).exp()
                };
                let y0 = [jitter(y0[0], &mut rng), jitter(y0[1], &mut rng)];
                Ok(ProblemSpec::LotkaVolterra {
                    method: *method,
                    y0,
                    t_end: *t_end,
                    reference_step: *reference_step,
                })
            }
            ProblemSpec::TensorPower {
                order,
                dim,
                shift,
                reference_iterations,
                ..
            } => Ok(ProblemSpec::TensorPower {
                order: *order,
                dim: *dim,
                seed,
                shift: *shift,
                reference_iterations: *reference_iterations,
            }),
            other => Err(BbpnError::Unsupported(format!(
                "problem family `{}` has no randomised instances",
                other.family()
            ))),
        }
    }
}
