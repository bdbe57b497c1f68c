//! Classical extrapolation in the variable `x = h^alpha`: two-point Richardson,
//! polynomial (Neville) and rational (Bulirsch-Stoer) tableaux.

use serde::{Deserialize, Serialize};

use crate::error::{BbpnError, Result};

/// Relative threshold below which a tableau denominator counts as zero.
const BREAKDOWN_TOL: f64 = 1e-14;

/// Intercept at `h = 0` of the line through `(h^a, q(h))` and `((gamma h)^a, q(gamma h))`.
pub fn richardson_pair(q_h: f64, q_gh: f64, h: f64, gamma: f64, alpha: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(BbpnError::invalid(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if !(h > 0.0) || !(alpha > 0.0) {
        return Err(BbpnError::invalid("h and alpha must be positive"));
    }
    Ok(q_h - (q_gh - q_h) / (gamma.powf(alpha) - 1.0))
}

/// Observations `(h_i, q(h_i))` sorted by strictly decreasing `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarSequence {
    points: Vec<(f64, f64)>,
    alpha: f64,
}

impl ScalarSequence {
    pub fn new(mut points: Vec<(f64, f64)>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(BbpnError::invalid(format!("alpha must be positive, got {alpha}")));
        }
        if points.len() < 2 {
            return Err(BbpnError::invalid("extrapolation needs at least two points"));
        }
        if points.iter().any(|&(h, q)| !(h > 0.0 && h.is_finite() && q.is_finite())) {
            return Err(BbpnError::invalid("resolutions must be positive and values finite"));
        }
        points.sort_by(|a, b| b.0.total_cmp(&a.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(BbpnError::invalid("duplicate resolution in sequence"));
        }
        Ok(Self { points, alpha })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn abscissae(&self) -> Vec<f64> {
        self.points.iter().map(|(h, _)| h.powf(self.alpha)).collect()
    }
}

/// Value at zero of the polynomial interpolant in `x = h^alpha`.
pub fn neville_extrapolate(seq: &ScalarSequence) -> f64 {
    let x = seq.abscissae();
    let mut p: Vec<f64> = seq.points.iter().map(|&(_, q)| q).collect();
    let n = p.len();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (x[i] * p[i + 1] - x[i + k] * p[i]) / (x[i] - x[i + k]);
        }
    }
    p[0]
}

/// Value at zero of the diagonal rational interpolant in `x = h^alpha`.
///
/// The first column is linear extrapolation, so two points reproduce
/// [`richardson_pair`] and three points reproduce any `(1, 1)` rational.
pub fn bulirsch_stoer_extrapolate(seq: &ScalarSequence) -> Result<f64> {
    let x = seq.abscissae();
    let n = x.len();
    // prev2 holds column k-2 (None encodes the column of infinities before the start)
    let mut prev2: Option<Vec<f64>> = None;
    let mut prev: Vec<f64> = seq.points.iter().map(|&(_, q)| q).collect();
    for k in 1..n {
        let mut cur = vec![0.0; n];
        for i in k..n {
            let diff = prev[i] - prev[i - 1];
            let scale = prev[i].abs().max(prev[i - 1].abs()).max(f64::MIN_POSITIVE);
            if diff.abs() <= BREAKDOWN_TOL * scale {
                cur[i] = prev[i];
                continue;
            }
            let inner = match &prev2 {
                None => 1.0,
                Some(p2) => {
                    let d2 = prev[i] - p2[i - 1];
                    if d2.abs() <= BREAKDOWN_TOL * scale {
                        return Err(BbpnError::RationalBreakdown { row: i, col: k });
                    }
                    1.0 - diff / d2
                }
            };
            let den = (x[i - k] / x[i]) * inner - 1.0;
            if den.abs() <= BREAKDOWN_TOL * (x[i - k] / x[i]).abs().max(1.0) {
                return Err(BbpnError::RationalBreakdown { row: i, col: k });
            }
            cur[i] = prev[i] + diff / den;
            if !cur[i].is_finite() {
                return Err(BbpnError::RationalBreakdown { row: i, col: k });
            }
        }
        prev2 = Some(prev);
        prev = cur;
    }
    Ok(prev[n - 1])
}
