use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{BbpnError, Result};

/// Maximum number of tenfold nugget increases after the first attempt.
pub(crate) const MAX_ESCALATIONS: usize = 5;

/// Cholesky factor of `K + eta I` with `eta = tau * trace(K) / m`.
#[derive(Clone, Debug)]
pub(crate) struct Factor {
    pub chol: Cholesky<f64, Dyn>,
    /// Absolute diagonal jitter `eta` that was added.
    pub jitter: f64,
    /// Relative jitter `tau` that succeeded.
    pub tau: f64,
}

impl Factor {
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Factorizes a symmetric matrix, escalating the nugget tenfold up to
/// [`MAX_ESCALATIONS`] times. `tau = 0` makes a single unregularised attempt.
pub(crate) fn factorize(k: &DMatrix<f64>, tau: f64) -> Result<Factor> {
    let m = k.nrows();
    if m == 0 {
        return Err(BbpnError::EmptyDataset);
    }
    if k.iter().any(|x| !x.is_finite()) {
        return Err(BbpnError::Numeric("gram matrix has non-finite entries".into()));
    }
    let scale = k.trace() / m as f64;
    let attempts = if tau > 0.0 { MAX_ESCALATIONS + 1 } else { 1 };
    let mut tau_k = tau;
    let mut jitter = 0.0;
    for _ in 0..attempts {
        jitter = tau_k * scale;
        let mut a = k.clone();
        for i in 0..m {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(a) {
            if chol.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok(Factor { chol, jitter, tau: tau_k });
            }
        }
        tau_k *= 10.0;
    }
    Err(BbpnError::Conditioning {
        nugget: jitter,
        condition: condition_estimate(k),
    })
}

/// `max |lambda| / |min lambda|` of a symmetric matrix.
pub(crate) fn condition_estimate(k: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(k.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Relative Frobenius error of `L L^T` against the regularised matrix.
pub(crate) fn reconstruction_error(k: &DMatrix<f64>, f: &Factor) -> f64 {
    let l = f.chol.l();
    let mut a = k.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += f.jitter;
    }
    let diff = &l * l.transpose() - &a;
    diff.norm() / a.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escalation_rescues_semidefinite_matrix() {
        // rank one, so the first attempt without jitter would fail
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let k = &v * v.transpose();
        assert!(factorize(&k, 0.0).is_err());
        let f = factorize(&k, 1e-10).unwrap();
        assert!(f.jitter > 0.0);
        assert!(reconstruction_error(&k, &f) < 1e-10);
    }

    #[test]
    fn indefinite_matrix_reports_conditioning() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match factorize(&k, 1e-10) {
            Err(BbpnError::Conditioning { nugget, .. }) => assert!(nugget > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
