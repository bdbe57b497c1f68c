use serde::{Deserialize, Serialize};

use crate::classical::{bulirsch_stoer_extrapolate, neville_extrapolate, ScalarSequence};
use crate::dataset::{augment_cumulative, Dataset, Ordinate};
use crate::error::{BbpnError, Result};
use crate::likelihood::{fit, FitConfig, FitResult};
use crate::metrics::CalibrationReport;
use crate::posterior::{condition, LimitPosterior};
use crate::problems::{generate_runs, truth_vector, ProblemAdapter};

use super::config::{ExperimentConfig, ModelConfig};

/// Limit posterior together with the fits that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub posterior: LimitPosterior,
    pub fits: Vec<FitResult>,
    /// Order used for each query point (fitted when learned).
    pub alpha: Vec<f64>,
}

/// Fits hyperparameters and extrapolates to `h = 0` at the query ordinates.
///
/// With `independent_outputs`, each query ordinate gets its own model built
/// from the data observed at that ordinate, and the joint posterior is block diagonal.
pub fn extrapolate(data: &Dataset, query: &[Ordinate], model: &ModelConfig, fit_cfg: &FitConfig) -> Result<Extrapolation> {
    if query.is_empty() {
        return Err(BbpnError::invalid("query set is empty"));
    }
    let prior = model.prior(data.p());
    if !model.independent_outputs {
        let res = fit(data, fit_cfg, &prior).map_err(|e| e.in_phase("fit"))?;
        let post = condition(data, &res.params, &prior)
            .and_then(|m| m.predict_limit(query))
            .map_err(|e| e.in_phase("predict"))?;
        return Ok(Extrapolation {
            alpha: vec![res.params.alpha; query.len()],
            posterior: post,
            fits: vec![res],
        });
    }
    let mut parts = Vec::with_capacity(query.len());
    let mut fits = Vec::with_capacity(query.len());
    let mut alpha = Vec::with_capacity(query.len());
    for (k, t) in query.iter().enumerate() {
        let sub = data
            .restrict(|s| s == t)
            .map_err(|e| BbpnError::invalid(format!("no data at query ordinate {:?}: {e}", t.flat())))?;
        let cfg = FitConfig {
            seed: fit_cfg.seed.wrapping_add(k as u64),
            ..fit_cfg.clone()
        };
        let res = fit(&sub, &cfg, &prior).map_err(|e| e.in_phase("fit"))?;
        let post = condition(&sub, &res.params, &prior)
            .and_then(|m| m.predict_limit(std::slice::from_ref(t)))
            .map_err(|e| e.in_phase("predict"))?;
        alpha.push(res.params.alpha);
        parts.push(post);
        fits.push(res);
    }
    Ok(Extrapolation {
        posterior: LimitPosterior::block_diagonal(parts),
        fits,
        alpha,
    })
}

/// Results for one (possibly cumulative) dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetOutcome {
    pub h_finest: f64,
    pub n_resolutions: usize,
    pub m: usize,
    pub extrapolation: Extrapolation,
    pub truth: Option<Vec<f64>>,
    pub report: Option<CalibrationReport>,
    /// Output of the finest run at each query ordinate.
    pub finest: Vec<Option<f64>>,
    /// Polynomial extrapolation through every resolution at each query ordinate.
    pub richardson: Vec<Option<f64>>,
    /// Rational extrapolation; `None` where the tableau broke down.
    pub bulirsch_stoer: Vec<Option<f64>>,
}

impl DatasetOutcome {
    /// Error norm of a baseline column against the truth, if both are complete.
    pub fn baseline_error(&self, values: &[Option<f64>]) -> Option<f64> {
        let truth = self.truth.as_ref()?;
        let mut s = 0.0;
        for (v, t) in values.iter().zip(truth) {
            let v = (*v)?;
            s += (v - t) * (v - t);
        }
        Some(s.sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub phase: String,
    pub message: String,
}

/// Everything produced by [`run_experiment`]; outcomes gathered before a failure are kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub h_grid: Vec<f64>,
    pub query: Vec<Ordinate>,
    pub outcomes: Vec<DatasetOutcome>,
    pub failure: Option<Failure>,
}

impl ResultBundle {
    pub fn last(&self) -> Option<&DatasetOutcome> {
        self.outcomes.last()
    }

    /// Converts a recorded failure back into an error.
    pub fn into_result(self) -> Result<Self> {
        match &self.failure {
            None => Ok(self),
            Some(f) => Err(BbpnError::Numeric(format!("{} failed: {}", f.phase, f.message))),
        }
    }
}

fn phase_of(err: &BbpnError, default: &'static str) -> (String, String) {
    match err {
        BbpnError::Phase { phase, source } => (phase.to_string(), source.to_string()),
        other => (default.to_string(), other.to_string()),
    }
}

fn baselines(data: &Dataset, query: &[Ordinate], alpha: &[f64]) -> (Vec<Option<f64>>, Vec<Option<f64>>, Vec<Option<f64>>) {
    let mut finest = Vec::with_capacity(query.len());
    let mut rich = Vec::with_capacity(query.len());
    let mut bs = Vec::with_capacity(query.len());
    for (t, &a) in query.iter().zip(alpha) {
        let seq = data.sequence_at(t);
        finest.push(seq.last().map(|p| p.1));
        let s = if a > 0.0 { ScalarSequence::new(seq, a).ok() } else { None };
        rich.push(s.as_ref().map(neville_extrapolate));
        bs.push(s.as_ref().and_then(|s| bulirsch_stoer_extrapolate(s).ok()));
    }
    (finest, rich, bs)
}

/// Evaluates one dataset against the adapter's truth.
pub fn evaluate_dataset(
    data: &Dataset,
    query: &[Ordinate],
    truth: Option<&Vec<f64>>,
    config: &ExperimentConfig,
) -> Result<DatasetOutcome> {
    let ex = extrapolate(data, query, &config.model, &config.fit_config(0))?;
    let report = match truth {
        Some(t) => Some(
            CalibrationReport::evaluate(&ex.posterior, t, config.model.central_mass, config.model.covariance)
                .map_err(|e| e.in_phase("metrics"))?,
        ),
        None => None,
    };
    // classical baselines need a positive order; the stationary model supplies none
    let base_alpha: Vec<f64> = if config.model.stationary {
        vec![config.model.alpha; query.len()]
    } else {
        ex.alpha.clone()
    };
    let (finest, richardson, bulirsch_stoer) = baselines(data, query, &base_alpha);
    Ok(DatasetOutcome {
        h_finest: data.h_finest(),
        n_resolutions: data.n_resolutions(),
        m: data.len(),
        extrapolation: ex,
        truth: truth.cloned(),
        report,
        finest,
        richardson,
        bulirsch_stoer,
    })
}

/// Generates the data, fits, extrapolates and scores every dataset of the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> ResultBundle {
    let mut bundle = ResultBundle {
        config: config.clone(),
        h_grid: Vec::new(),
        query: Vec::new(),
        outcomes: Vec::new(),
        failure: None,
    };
    let fail = |bundle: &mut ResultBundle, err: BbpnError, phase: &'static str| {
        let (phase, message) = phase_of(&err, phase);
        bundle.failure = Some(Failure { phase, message });
    };
    let h_grid = match config.h_grid() {
        Ok(h) => h,
        Err(e) => {
            fail(&mut bundle, e, "config");
            return bundle;
        }
    };
    bundle.h_grid = h_grid.clone();
    let adapter: Box<dyn ProblemAdapter> = match config.problem.build(config.grid.parameterization) {
        Ok(a) => a,
        Err(e) => {
            fail(&mut bundle, e, "setup");
            return bundle;
        }
    };
    let query = config.query_override().unwrap_or_else(|| adapter.query());
    bundle.query = query.clone();
    let runs = match generate_runs(adapter.as_ref(), &h_grid) {
        Ok(r) => r,
        Err(e) => {
            fail(&mut bundle, e, "generate");
            return bundle;
        }
    };
    let truth = match truth_vector(adapter.as_ref(), &query) {
        Ok(t) => t,
        Err(e) => {
            fail(&mut bundle, e, "truth");
            return bundle;
        }
    };
    let datasets: Vec<Dataset> = match augment_cumulative(&runs) {
        Ok(all) if config.grid.cumulative => all.into_iter().filter(|d| d.n_resolutions() >= 2).collect(),
        Ok(mut all) => vec![all.pop().expect("grid has at least two resolutions")],
        Err(e) => {
            fail(&mut bundle, e, "generate");
            return bundle;
        }
    };
    for data in &datasets {
        match evaluate_dataset(data, &query, truth.as_ref(), config) {
            Ok(o) => bundle.outcomes.push(o),
            Err(e) => {
                fail(&mut bundle, e, "fit");
                return bundle;
            }
        }
    }
    bundle
}

/// One repetition of a calibration study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub repetition: usize,
    pub seed: u64,
    pub report: CalibrationReport,
}

/// Repeats the experiment on randomised problem instances and scores the final dataset of each.
pub fn run_calibration(config: &ExperimentConfig) -> Result<Vec<CalibrationRow>> {
    let mut rows = Vec::with_capacity(config.calibration.repetitions);
    for r in 0..config.calibration.repetitions {
        let seed = config.seed.wrapping_add(r as u64 + 1);
        let mut cfg = config.clone();
        cfg.problem = config.problem.perturbed(seed).map_err(|e| e.in_phase("setup"))?;
        cfg.grid.cumulative = false;
        cfg.seed = seed;
        let bundle = run_experiment(&cfg).into_result()?;
        let report = bundle
            .last()
            .and_then(|o| o.report.clone())
            .ok_or_else(|| BbpnError::Unsupported("calibration needs a problem with a known truth".into()))?;
        rows.push(CalibrationRow {
            repetition: r,
            seed,
            report,
        });
    }
    Ok(rows)
}
