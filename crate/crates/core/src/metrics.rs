//! Accuracy and calibration measures for limit posteriors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{BbpnError, Result};
use crate::posterior::LimitPosterior;

/// Relative eigenvalue floor used when whitening with `C^{-1/2}`.
pub const EIGEN_FLOOR: f64 = 1e-12;

fn residual(post: &LimitPosterior, truth: &[f64]) -> Result<DVector<f64>> {
    if truth.len() != post.mean.len() {
        return Err(BbpnError::invalid(format!(
            "truth has {} entries but the posterior has {}",
            truth.len(),
            post.mean.len()
        )));
    }
    Ok(&post.mean - DVector::from_column_slice(truth))
}

/// `W = || E[Q(0, .)] - q* ||`.
pub fn error_w(post: &LimitPosterior, truth: &[f64]) -> Result<f64> {
    Ok(residual(post, truth)?.norm())
}

/// Surprise value and whether any eigenvalue of the covariance had to be floored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surprise {
    pub value: f64,
    pub degraded_rank: bool,
}

/// Which covariance the surprise is whitened with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    #[default]
    Joint,
    Diagonal,
}

/// `S = || C^{-1/2} (mean - truth) ||` with the full joint covariance.
pub fn surprise_s(post: &LimitPosterior, truth: &[f64]) -> Result<Surprise> {
    let r = residual(post, truth)?;
    whitened_norm(&post.covariance, &r)
}

/// Surprise using only the marginal variances.
pub fn surprise_s_diagonal(post: &LimitPosterior, truth: &[f64]) -> Result<Surprise> {
    let r = residual(post, truth)?;
    whitened_norm(&DMatrix::from_diagonal(&post.covariance.diagonal()), &r)
}

pub fn surprise(post: &LimitPosterior, truth: &[f64], mode: CovarianceMode) -> Result<Surprise> {
    match mode {
        CovarianceMode::Joint => surprise_s(post, truth),
        CovarianceMode::Diagonal => surprise_s_diagonal(post, truth),
    }
}

fn whitened_norm(c: &DMatrix<f64>, r: &DVector<f64>) -> Result<Surprise> {
    if c.iter().any(|v| !v.is_finite()) {
        return Err(BbpnError::Numeric("covariance has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new((c + c.transpose()) * 0.5);
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let floor = if max > 0.0 { EIGEN_FLOOR * max } else { f64::MIN_POSITIVE };
    let mut degraded = false;
    let mut s2 = 0.0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let l = if lam < floor {
            degraded = true;
            floor
        } else {
            lam
        };
        let proj = eig.eigenvectors.column(k).dot(r);
        s2 += proj * proj / l;
    }
    Ok(Surprise {
        value: s2.sqrt(),
        degraded_rank: degraded,
    })
}

/// Cumulative distribution function of chi-squared with `dof` degrees of freedom.
pub fn chi2_cdf(dof: u32, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(0.5 * dof as f64, 0.5 * x)
    }
}

/// Quantile of chi-squared by bisection on the regularized lower incomplete gamma function.
pub fn chi2_quantile(dof: u32, p: f64) -> Result<f64> {
    if dof == 0 {
        return Err(BbpnError::invalid("degrees of freedom must be positive"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(BbpnError::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    let mut hi = dof as f64 + 10.0;
    while chi2_cdf(dof, hi) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(dof, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Central band holding `central_mass` of a chi-squared distribution.
pub fn chi2_band(dof: u32, central_mass: f64) -> Result<(f64, f64)> {
    if !(central_mass > 0.0 && central_mass < 1.0) {
        return Err(BbpnError::invalid(format!("central mass must lie in (0, 1), got {central_mass}")));
    }
    let tail = 0.5 * (1.0 - central_mass);
    Ok((chi2_quantile(dof, tail)?, chi2_quantile(dof, 1.0 - tail)?))
}

/// Least-squares slope of `log err` against `log h`.
pub fn convergence_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(BbpnError::invalid("slope needs at least two points"));
    }
    if points.iter().any(|&(h, e)| !(h > 0.0) || !(e > 0.0)) {
        return Err(BbpnError::invalid("resolutions and errors must be positive"));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(BbpnError::invalid("all resolutions are equal"));
    }
    Ok(sxy / sxx)
}

/// Error, surprise and chi-squared band membership for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub w: f64,
    pub s: f64,
    pub dof: u32,
    pub band_lower: f64,
    pub band_upper: f64,
    pub inside_band: bool,
    pub degraded_rank: bool,
}

impl CalibrationReport {
    pub fn evaluate(post: &LimitPosterior, truth: &[f64], central_mass: f64, mode: CovarianceMode) -> Result<Self> {
        let w = error_w(post, truth)?;
        let s = surprise(post, truth, mode)?;
        let dof = truth.len() as u32;
        let (band_lower, band_upper) = chi2_band(dof, central_mass)?;
        let s2 = s.value * s.value;
        Ok(Self {
            w,
            s: s.value,
            dof,
            band_lower,
            band_upper,
            inside_band: s2 >= band_lower && s2 <= band_upper,
            degraded_rank: s.degraded_rank,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Ordinate;
    use approx::assert_relative_eq;

    fn post(mean: Vec<f64>, cov: DMatrix<f64>) -> LimitPosterior {
        LimitPosterior {
            query: vec![Ordinate::empty(); mean.len()],
            mean: DVector::from_vec(mean),
            covariance: cov,
        }
    }

    #[test]
    fn error_and_surprise_examples() {
        let p = post(vec![3.0, 4.0], DMatrix::identity(2, 2));
        assert_eq!(error_w(&p, &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(error_w(&p, &[3.0, 4.0]).unwrap(), 0.0);
        let p = post(vec![1.0, 1.0], DMatrix::identity(2, 2));
        assert_relative_eq!(surprise_s(&p, &[0.0, 0.0]).unwrap().value, 2f64.sqrt(), epsilon = 1e-14);
        let p = post(vec![2.0], DMatrix::from_element(1, 1, 4.0));
        assert_relative_eq!(surprise_s(&p, &[0.0]).unwrap().value, 1.0, epsilon = 1e-14);
        assert!(error_w(&p, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn singular_covariance_is_flagged() {
        let p = post(vec![1.0, 1.0], DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(surprise_s(&p, &[0.0, 0.0]).unwrap().degraded_rank);
    }

    #[test]
    fn chi2_quantiles_match_reference_values() {
        // reference quantiles from an independent incomplete-gamma implementation
        let (lo, hi) = chi2_band(2, 0.95).unwrap();
        assert!((lo - 0.050_635_616_5).abs() < 1e-3 && (hi - 7.377_758_908).abs() < 1e-3);
        let (lo, hi) = chi2_band(1, 0.95).unwrap();
        assert!((lo - 0.000_982_069).abs() < 1e-3 && (hi - 5.023_886_187).abs() < 1e-3);
        // chi2 with 2 dof is exponential with mean 2, so quantiles have closed form
        assert_relative_eq!(chi2_quantile(2, 0.3).unwrap(), -2.0 * 0.7f64.ln(), epsilon = 1e-10);
        let (l1, u1) = chi2_band(3, 0.9).unwrap();
        let (l2, u2) = chi2_band(3, 0.99).unwrap();
        assert!(l2 < l1 && u2 > u1);
    }

    #[test]
    fn slopes() {
        assert_relative_eq!(convergence_slope(&[(0.1, 0.1), (0.01, 0.01)]).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(convergence_slope(&[(0.1, 0.01), (0.01, 0.0001)]).unwrap(), 2.0, epsilon = 1e-12);
        let pts: Vec<(f64, f64)> = (0..5).map(|i| {
            let h = 0.5f64.powi(i);
            (h, 3.0 * h.powf(1.7))
        }).collect();
        assert_relative_eq!(convergence_slope(&pts).unwrap(), 1.7, epsilon = 1e-10);
        assert!(convergence_slope(&[(0.1, 0.0), (0.01, 1.0)]).is_err());
    }
}
