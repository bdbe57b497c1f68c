use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{HParameterization, Ordinate};
use crate::error::{BbpnError, Result};
use crate::kernel::{BasisSet, GpPrior, RadialProfile};
use crate::likelihood::FitConfig;
use crate::metrics::CovarianceMode;
use crate::problems::ProblemSpec;

/// One experiment, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemSpec,
    pub grid: GridConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub fit: FitSettings,
    /// Explicit query ordinates, each a list of one-dimensional block values. Defaults to the problem's own.
    #[serde(default)]
    pub query: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Resolutions, given either directly as `h` or through a control parameter `w`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub h: Option<Vec<f64>>,
    #[serde(default)]
    pub w: Option<Vec<f64>>,
    #[serde(default)]
    pub parameterization: HParameterization,
    /// Also evaluate every cumulative prefix of the runs (coarse to fine).
    #[serde(default)]
    pub cumulative: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kernel: RadialProfile,
    pub basis_v: usize,
    pub alpha: f64,
    pub learn_alpha: bool,
    pub stationary: bool,
    /// Fit a separate model to each query ordinate.
    pub independent_outputs: bool,
    pub nugget: f64,
    pub covariance: CovarianceMode,
    pub band_sigmas: f64,
    pub central_mass: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernel: RadialProfile::Matern12,
            basis_v: 1,
            alpha: 1.0,
            learn_alpha: false,
            stationary: false,
            independent_outputs: false,
            nugget: 1e-10,
            covariance: CovarianceMode::Joint,
            band_sigmas: 2.0,
            central_mass: 0.95,
        }
    }
}

impl ModelConfig {
    pub fn prior(&self, p: usize) -> GpPrior {
        GpPrior::new(p, self.kernel, BasisSet::polynomial(self.basis_v))
            .with_nugget(self.nugget)
            .with_stationary(self.stationary)
    }

    /// Order used by the model; zero under the stationary ablation.
    pub fn effective_alpha(&self) -> f64 {
        if self.stationary {
            0.0
        } else {
            self.alpha
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stationary && self.learn_alpha {
            return Err(BbpnError::Config("stationary ablation fixes alpha = 0 and cannot learn it".into()));
        }
        if !self.stationary && !(self.alpha > 0.0) {
            return Err(BbpnError::Config("alpha must be positive".into()));
        }
        if !(self.nugget >= 0.0) || !(self.band_sigmas > 0.0) || !(self.central_mass > 0.0 && self.central_mass < 1.0) {
            return Err(BbpnError::Config("nugget, band width or central mass out of range".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub scale_bounds: (f64, f64),
    pub alpha_bounds: (f64, f64),
}

impl Default for FitSettings {
    fn default() -> Self {
        let d = FitConfig::default();
        Self {
            restarts: d.restarts,
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
            scale_bounds: d.scale_bounds,
            alpha_bounds: d.alpha_bounds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub repetitions: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { repetitions: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| BbpnError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| BbpnError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| BbpnError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.h_grid()?;
        self.fit_config(0).validate()?;
        Ok(())
    }

    /// Resolutions, coarsest first.
    pub fn h_grid(&self) -> Result<Vec<f64>> {
        let hs = match (&self.grid.h, &self.grid.w) {
            (Some(h), None) => h.clone(),
            (None, Some(w)) => w
                .iter()
                .map(|&w| self.grid.parameterization.to_h(w))
                .collect::<Result<Vec<_>>>()?,
            _ => return Err(BbpnError::Config("grid needs exactly one of `h` or `w`".into())),
        };
        if hs.len() < 2 {
            return Err(BbpnError::Config("grid needs at least two resolutions".into()));
        }
        if hs.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(BbpnError::Config("resolutions must be positive".into()));
        }
        if hs.windows(2).any(|p| !(p[0] > p[1])) {
            return Err(BbpnError::Config("resolutions must be strictly decreasing".into()));
        }
        Ok(hs)
    }

    pub fn fit_config(&self, seed_offset: u64) -> FitConfig {
        FitConfig {
            learn_alpha: self.model.learn_alpha,
            alpha: self.model.effective_alpha(),
            scale_bounds: self.fit.scale_bounds,
            alpha_bounds: self.fit.alpha_bounds,
            restarts: self.fit.restarts,
            max_iters: self.fit.max_iters,
            grad_tol: self.fit.grad_tol,
            seed: self.seed.wrapping_add(seed_offset),
        }
    }

    pub fn query_override(&self) -> Option<Vec<Ordinate>> {
        self.query
            .as_ref()
            .map(|q| q.iter().map(|t| Ordinate::scalars(t)).collect())
    }
}
