//! Marginal likelihood, closed-form amplitude, profile likelihood and its
//! maximisation over the remaining hyperparameters.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{BbpnError, Result};
use crate::kernel::{assemble_gram, free_params, gram_gradients, GpPrior, Hyperparameters, Param};
use crate::linalg::{factorize, Factor};
use crate::optim::{minimize, BfgsOptions};

fn unit_scale(params: &Hyperparameters) -> Hyperparameters {
    let mut p = params.clone();
    p.sigma2 = 1.0;
    p
}

struct Quadratic {
    factor: Factor,
    weights: DVector<f64>,
    qkq: f64,
}

fn quadratic(data: &Dataset, params: &Hyperparameters, prior: &GpPrior) -> Result<(DMatrix<f64>, Quadratic)> {
    let q = data.values();
    if q.iter().all(|&v| v == 0.0) {
        return Err(BbpnError::DegenerateData("all observed values are zero".into()));
    }
    let gram = assemble_gram(data, &unit_scale(params), prior)?;
    let factor = factorize(&gram, prior.nugget)?;
    let weights = factor.solve(&q);
    let qkq = q.dot(&weights);
    if !(qkq > 0.0 && qkq.is_finite()) {
        return Err(BbpnError::DegenerateData(format!("quadratic form q'K^-1q = {qkq}")));
    }
    Ok((gram, Quadratic { factor, weights, qkq }))
}

/// Gaussian log marginal likelihood at the given amplitude `sigma2`.
pub fn log_likelihood(data: &Dataset, params: &Hyperparameters, prior: &GpPrior) -> Result<f64> {
    if !(params.sigma2 > 0.0) {
        return Err(BbpnError::invalid("sigma2 must be positive"));
    }
    let q = data.values();
    let gram = assemble_gram(data, &unit_scale(params), prior)?;
    let factor = factorize(&gram, prior.nugget)?;
    let qkq = q.dot(&factor.solve(&q));
    let m = data.len() as f64;
    Ok(-0.5 * m * (2.0 * PI).ln() - 0.5 * m * params.sigma2.ln() - 0.5 * factor.log_det() - qkq / (2.0 * params.sigma2))
}

/// Maximum-likelihood amplitude `q' K^-1 q / m` for unit-scale `K`. `params.sigma2` is ignored.
pub fn sigma2_ml(data: &Dataset, params: &Hyperparameters, prior: &GpPrior) -> Result<f64> {
    let (_, quad) = quadratic(data, params, prior)?;
    Ok(quad.qkq / data.len() as f64)
}

/// Additive constant separating the profile likelihood from the full likelihood at `sigma2_ml`.
pub fn profile_constant(m: usize) -> f64 {
    let m = m as f64;
    -0.5 * m * (2.0 * PI).ln() - 0.5 * m + 0.5 * m * m.ln()
}

/// Likelihood with `sigma2` profiled out, up to [`profile_constant`].
pub fn profile_log_likelihood(data: &Dataset, params: &Hyperparameters, prior: &GpPrior) -> Result<f64> {
    let (_, quad) = quadratic(data, params, prior)?;
    let m = data.len() as f64;
    Ok(-0.5 * m * quad.qkq.ln() - 0.5 * quad.factor.log_det())
}

/// Profile likelihood together with its gradient in natural parameter coordinates.
#[derive(Clone, Debug)]
pub struct ProfileEvaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub params: Vec<Param>,
    pub sigma2_ml: f64,
}

pub fn profile_evaluate(data: &Dataset, params: &Hyperparameters, prior: &GpPrior) -> Result<ProfileEvaluation> {
    let (_, quad) = quadratic(data, params, prior)?;
    let m = data.len();
    let mf = m as f64;
    let value = -0.5 * mf * quad.qkq.ln() - 0.5 * quad.factor.log_det();
    let kinv = quad.factor.inverse();
    let tr_kinv = kinv.trace();
    let w = &quad.weights;
    let ww = w.norm_squared();
    let grads = gram_gradients(data, &unit_scale(params), prior)?;
    let mut names = Vec::with_capacity(grads.len());
    let mut gradient = Vec::with_capacity(grads.len());
    for (param, d) in grads {
        // the jitter tau * trace(K) / m moves with the parameters too
        let c = quad.factor.tau * d.trace() / mf;
        let wdw = w.dot(&(&d * w)) + c * ww;
        let tr = kinv.component_mul(&d).sum() + c * tr_kinv;
        gradient.push(0.5 * mf * wdw / quad.qkq - 0.5 * tr);
        names.push(param);
    }
    Ok(ProfileEvaluation {
        value,
        gradient,
        params: names,
        sigma2_ml: quad.qkq / mf,
    })
}

/// Gradient of [`profile_log_likelihood`] with respect to the free parameters in [`free_params`] order.
pub fn profile_gradient(data: &Dataset, params: &Hyperparameters, prior: &GpPrior) -> Result<Vec<f64>> {
    Ok(profile_evaluate(data, params, prior)?.gradient)
}

/// Settings for maximum-likelihood estimation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learn_alpha: bool,
    /// Fixed order, or the starting order of the heuristic restart when learned.
    pub alpha: f64,
    /// Box for `rho_g`, `rho_e`, `ell_h` and every `ell_t`.
    pub scale_bounds: (f64, f64),
    pub alpha_bounds: (f64, f64),
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            learn_alpha: false,
            alpha: 1.0,
            scale_bounds: (1e-4, 1e4),
            alpha_bounds: (0.1, 6.0),
            restarts: 10,
            max_iters: 200,
            grad_tol: 1e-5,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn bounds(&self, param: Param) -> (f64, f64) {
        match param {
            Param::Alpha => self.alpha_bounds,
            _ => self.scale_bounds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("scale", self.scale_bounds), ("alpha", self.alpha_bounds)] {
            if !(lo > 0.0 && hi.is_finite() && lo < hi) {
                return Err(BbpnError::invalid(format!("{name} bounds must satisfy 0 < lower < upper < inf")));
            }
        }
        if self.restarts == 0 || self.max_iters == 0 || !(self.grad_tol > 0.0) {
            return Err(BbpnError::invalid("restarts, max_iters and grad_tol must be positive"));
        }
        Ok(())
    }
}

/// Outcome of one optimiser restart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub index: usize,
    pub initial: Vec<f64>,
    pub initial_profile_log_likelihood: Option<f64>,
    pub final_point: Vec<f64>,
    pub profile_log_likelihood: Option<f64>,
    pub gradient_norm: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Hyperparameters,
    /// Full log-likelihood at the fitted parameters and `sigma2_ml`.
    pub log_likelihood: f64,
    pub profile_log_likelihood: f64,
    pub converged: bool,
    pub gradient_norm: f64,
    pub restart_index: usize,
    pub free_params: Vec<String>,
    pub restarts: Vec<RestartRecord>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v[v.len() / 2])
}

/// Data-informed starting point used for restart 0.
pub fn heuristic_start(data: &Dataset, config: &FitConfig, p: usize) -> Hyperparameters {
    let hs = data.resolutions();
    let h_max = hs[0];
    let alpha = config.alpha.max(0.0);
    let mut params = Hyperparameters::unit(p, alpha);
    params.alpha_learned = config.learn_alpha;
    params.ell_h = h_max;
    let ords = data.ordinates();
    for (i, ell) in params.ell_t.iter_mut().enumerate() {
        let mut gaps = Vec::new();
        for (a, b) in ords.iter().zip(ords.iter().skip(1)) {
            let d = a.block_distance(b, i);
            if d > 0.0 {
                gaps.push(d);
            }
        }
        let span = ords
            .iter()
            .map(|t| ords[0].block_distance(t, i))
            .fold(0.0f64, f64::max);
        *ell = if span > 0.0 { span.max(median(gaps).unwrap_or(span)) * 0.5 } else { 1.0 };
    }
    // error scale from the spread between the coarsest and finest runs
    let q = data.values();
    let ms = q.iter().map(|v| v * v).sum::<f64>() / q.len() as f64;
    let mut diffs = Vec::new();
    for t in &ords {
        let seq = data.sequence_at(t);
        if seq.len() >= 2 {
            let d = seq[0].1 - seq[seq.len() - 1].1;
            diffs.push(d * d);
        }
    }
    if ms > 0.0 && !diffs.is_empty() {
        let rel = diffs.iter().sum::<f64>() / diffs.len() as f64 / ms;
        let hp = if prior_is_stationary(alpha) { 1.0 } else { h_max.powf(2.0 * alpha) };
        if rel > 0.0 && hp > 0.0 {
            params.rho_e = rel / hp;
        }
    }
    for param in free_params(p, config.learn_alpha) {
        let (lo, hi) = config.bounds(param);
        params.set(param, params.get(param).clamp(lo, hi));
    }
    params
}

fn prior_is_stationary(alpha: f64) -> bool {
    alpha == 0.0
}

fn to_log(params: &Hyperparameters, order: &[Param]) -> Vec<f64> {
    order.iter().map(|&p| params.get(p).ln()).collect()
}

fn from_log(base: &Hyperparameters, order: &[Param], x: &[f64]) -> Hyperparameters {
    let mut out = base.clone();
    for (&p, &v) in order.iter().zip(x) {
        out.set(p, v.exp());
    }
    out
}

/// Multi-start maximisation of the profile likelihood in log-parameter space.
pub fn fit(data: &Dataset, config: &FitConfig, prior: &GpPrior) -> Result<FitResult> {
    config.validate()?;
    if data.n_resolutions() < 2 {
        return Err(BbpnError::invalid("fitting needs at least two distinct resolutions"));
    }
    if data.p() != prior.p() {
        return Err(BbpnError::invalid("dataset and prior disagree on the number of ordinate blocks"));
    }
    if prior.stationary && (config.learn_alpha || config.alpha != 0.0) {
        return Err(BbpnError::invalid("the stationary error kernel requires a fixed alpha = 0"));
    }
    let p = prior.p();
    let order = free_params(p, config.learn_alpha);
    let lo: Vec<f64> = order.iter().map(|&q| config.bounds(q).0.ln()).collect();
    let hi: Vec<f64> = order.iter().map(|&q| config.bounds(q).1.ln()).collect();

    let base = heuristic_start(data, config, p);
    let mut starts = vec![to_log(&base, &order)];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 1..config.restarts {
        starts.push((0..order.len()).map(|i| rng.random_range(lo[i]..hi[i])).collect());
    }

    let opts = BfgsOptions {
        max_iters: config.max_iters,
        grad_tol: config.grad_tol,
    };
    let objective = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let params = from_log(&base, &order, x);
        let ev = profile_evaluate(data, &params, prior).ok()?;
        if !ev.value.is_finite() || ev.gradient.iter().any(|g| !g.is_finite()) {
            return None;
        }
        let grad = ev.gradient.iter().zip(x).map(|(g, xi)| -g * xi.exp()).collect();
        Some((-ev.value, grad))
    };

    let records: Vec<RestartRecord> = starts
        .par_iter()
        .enumerate()
        .map(|(index, x0)| {
            let initial = profile_log_likelihood(data, &from_log(&base, &order, x0), prior).ok();
            match minimize(objective, x0, &lo, &hi, opts) {
                Some(min) => RestartRecord {
                    index,
                    initial: x0.iter().map(|v| v.exp()).collect(),
                    initial_profile_log_likelihood: initial,
                    final_point: min.x.iter().map(|v| v.exp()).collect(),
                    profile_log_likelihood: Some(-min.f),
                    gradient_norm: Some(min.projected_gradient_norm),
                    iterations: min.iterations,
                    converged: min.converged,
                    error: None,
                },
                None => RestartRecord {
                    index,
                    initial: x0.iter().map(|v| v.exp()).collect(),
                    initial_profile_log_likelihood: initial,
                    final_point: x0.iter().map(|v| v.exp()).collect(),
                    profile_log_likelihood: None,
                    gradient_norm: None,
                    iterations: 0,
                    converged: false,
                    error: Some("objective undefined at the initial point".into()),
                },
            }
        })
        .collect();

    let best = records
        .iter()
        .filter(|r| r.profile_log_likelihood.is_some())
        .max_by(|a, b| {
            a.profile_log_likelihood
                .unwrap()
                .total_cmp(&b.profile_log_likelihood.unwrap())
                .then(b.index.cmp(&a.index))
        })
        .ok_or_else(|| BbpnError::Numeric("profile likelihood undefined at every restart".into()))?;
    let best_value = best.profile_log_likelihood.unwrap();
    let converged = best.converged
        || records.iter().any(|r| {
            r.converged
                && r.profile_log_likelihood
                    .is_some_and(|v| (v - best_value).abs() <= 1e-6 * (1.0 + best_value.abs()))
        });

    let log_x: Vec<f64> = best.final_point.iter().map(|v| v.ln()).collect();
    let mut params = from_log(&base, &order, &log_x);
    params.alpha_learned = config.learn_alpha;
    if !config.learn_alpha {
        params.alpha = config.alpha;
    }
    params.sigma2 = sigma2_ml(data, &params, prior)?;
    let ll = log_likelihood(data, &params, prior)?;
    Ok(FitResult {
        log_likelihood: ll,
        profile_log_likelihood: best_value,
        converged,
        gradient_norm: best.gradient_norm.unwrap_or(f64::NAN),
        restart_index: best.index,
        free_params: order.iter().map(Param::to_string).collect(),
        restarts: records,
        params,
    })
}
