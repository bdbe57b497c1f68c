use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dataset::Ordinate;
use crate::error::{BbpnError, Result};

use super::ProblemAdapter;

/// Time grid and states of a fixed-step integration.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

fn step_count(t_end: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && t_end > 0.0 && h.is_finite() && t_end.is_finite()) {
        return Err(BbpnError::invalid("step size and final time must be positive"));
    }
    if h > t_end * (1.0 + 1e-12) {
        return Err(BbpnError::invalid(format!("step {h} exceeds the final time {t_end}")));
    }
    let n = (t_end / h).round();
    if (n * h - t_end).abs() > 1e-9 * t_end {
        return Err(BbpnError::invalid(format!("step {h} does not divide the final time {t_end}")));
    }
    Ok(n as usize)
}

fn check_finite(y: &[f64], step: usize) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(BbpnError::Divergence { step })
    }
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(yi, xi)| yi + a * xi).collect()
}

/// Explicit Euler, order 1. `h` must divide `t_end`.
pub fn euler_solve<F>(f: F, y0: &[f64], t_end: f64, h: f64) -> Result<Trajectory>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let n = step_count(t_end, h)?;
    let mut times = vec![0.0];
    let mut states = vec![y0.to_vec()];
    for k in 0..n {
        let t = k as f64 * h;
        let y = states.last().unwrap();
        let next = axpy(y, h, &f(t, y));
        check_finite(&next, k + 1)?;
        states.push(next);
        times.push((k + 1) as f64 * h);
    }
    Ok(Trajectory { times, states })
}

/// Two-step Adams-Bashforth, order 2, started with one Euler step.
pub fn ab2_solve<F>(f: F, y0: &[f64], t_end: f64, h: f64) -> Result<Trajectory>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let n = step_count(t_end, h)?;
    let mut times = vec![0.0];
    let mut states = vec![y0.to_vec()];
    let mut f_prev = f(0.0, y0);
    let first = axpy(y0, h, &f_prev);
    check_finite(&first, 1)?;
    states.push(first);
    times.push(h);
    for k in 1..n {
        let t = k as f64 * h;
        let y = states.last().unwrap();
        let f_cur = f(t, y);
        let next: Vec<f64> = y
            .iter()
            .zip(f_cur.iter().zip(&f_prev))
            .map(|(yi, (fc, fp))| yi + h * (1.5 * fc - 0.5 * fp))
            .collect();
        check_finite(&next, k + 1)?;
        states.push(next);
        times.push((k + 1) as f64 * h);
        f_prev = f_cur;
    }
    Ok(Trajectory { times, states })
}

/// Classical fourth-order Runge-Kutta; returns the final state only.
pub fn rk4_reference<F>(f: F, y0: &[f64], t_end: f64, h_ref: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let n = step_count(t_end, h_ref)?;
    let mut y = y0.to_vec();
    for k in 0..n {
        let t = k as f64 * h_ref;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h_ref, &axpy(&y, 0.5 * h_ref, &k1));
        let k3 = f(t + 0.5 * h_ref, &axpy(&y, 0.5 * h_ref, &k2));
        let k4 = f(t + h_ref, &axpy(&y, h_ref, &k3));
        for i in 0..y.len() {
            y[i] += h_ref / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_finite(&y, k + 1)?;
    }
    Ok(y)
}

/// Predator-prey field `(0.5 y1 - 0.05 y1 y2, -0.5 y2 + 0.05 y1 y2)`.
pub fn lotka_volterra(_t: f64, y: &[f64]) -> Vec<f64> {
    vec![
        0.5 * y[0] - 0.05 * y[0] * y[1],
        -0.5 * y[1] + 0.05 * y[0] * y[1],
    ]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OdeMethod {
    #[default]
    Euler,
    Ab2,
}

impl OdeMethod {
    pub fn order(self) -> f64 {
        match self {
            OdeMethod::Euler => 1.0,
            OdeMethod::Ab2 => 2.0,
        }
    }
}

/// Final states of Lotka-Volterra; the ordinate is the component number (1 or 2).
#[derive(Debug)]
pub struct LotkaVolterraAdapter {
    pub method: OdeMethod,
    pub y0: [f64; 2],
    pub t_end: f64,
    pub reference_step: f64,
    reference: OnceLock<std::result::Result<Vec<f64>, String>>,
}

impl LotkaVolterraAdapter {
    pub fn new(method: OdeMethod, y0: [f64; 2], t_end: f64, reference_step: f64) -> Self {
        Self {
            method,
            y0,
            t_end,
            reference_step,
            reference: OnceLock::new(),
        }
    }

    pub fn reference(&self) -> Result<Vec<f64>> {
        self.reference
            .get_or_init(|| rk4_reference(lotka_volterra, &self.y0, self.t_end, self.reference_step).map_err(|e| e.to_string()))
            .clone()
            .map_err(BbpnError::Numeric)
    }
}

impl ProblemAdapter for LotkaVolterraAdapter {
    fn name(&self) -> &str {
        "lotka-volterra"
    }

    fn run(&self, h: f64) -> Result<Vec<(Ordinate, f64)>> {
        let traj = match self.method {
            OdeMethod::Euler => euler_solve(lotka_volterra, &self.y0, self.t_end, h)?,
            OdeMethod::Ab2 => ab2_solve(lotka_volterra, &self.y0, self.t_end, h)?,
        };
        Ok(traj
            .final_state()
            .iter()
            .enumerate()
            .map(|(i, &v)| (Ordinate::index(i + 1), v))
            .collect())
    }

    fn order_hint(&self) -> Option<f64> {
        Some(self.method.order())
    }

    fn p(&self) -> usize {
        1
    }

    fn query(&self) -> Vec<Ordinate> {
        vec![Ordinate::index(1), Ordinate::index(2)]
    }

    fn truth(&self, t: &Ordinate) -> Result<Option<f64>> {
        let i = t.block(0)[0] as usize;
        let r = self.reference()?;
        Ok(i.checked_sub(1).and_then(|k| r.get(k)).copied())
    }
}
