use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::{HParameterization, Ordinate};
use crate::error::{BbpnError, Result};

use super::ProblemAdapter;

/// Five-point Laplacian on an `l x m` grid: `m` diagonal blocks `tridiag(-1, 4, -1)` of size `l`, coupled by `-I`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaplacianSpec {
    pub l: usize,
    pub m: usize,
}

impl LaplacianSpec {
    fn validate(&self) -> Result<()> {
        if self.l == 0 || self.m == 0 {
            return Err(BbpnError::invalid("Laplacian grid dimensions must be positive"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.l * self.m
    }
}

pub fn laplacian_matrix(spec: LaplacianSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let (l, m) = (spec.l, spec.m);
    let n = l * m;
    let mut a = DMatrix::zeros(n, n);
    for b in 0..m {
        for i in 0..l {
            let r = b * l + i;
            a[(r, r)] = 4.0;
            if i + 1 < l {
                a[(r, r + 1)] = -1.0;
                a[(r + 1, r)] = -1.0;
            }
            if b + 1 < m {
                a[(r, r + l)] = -1.0;
                a[(r + l, r)] = -1.0;
            }
        }
    }
    Ok(a)
}

/// Closed-form eigenvalues `4 - 2 cos(p pi / (l+1)) - 2 cos(q pi / (m+1))`, ascending.
pub fn laplacian_eigenvalues(spec: LaplacianSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.dim());
    for p in 1..=spec.l {
        for q in 1..=spec.m {
            out.push(
                4.0 - 2.0 * (p as f64 * PI / (spec.l as f64 + 1.0)).cos()
                    - 2.0 * (q as f64 * PI / (spec.m as f64 + 1.0)).cos(),
            );
        }
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Eigenvalues of a symmetric matrix from a dense solver, ascending.
pub fn dense_symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Unshifted QR iteration `A_{k+1} = R_k Q_k`; returns `diag(A_k)` for `k = 1..=iterations`.
pub fn qr_iteration(a: &DMatrix<f64>, iterations: usize) -> Result<Vec<DVector<f64>>> {
    if !a.is_square() {
        return Err(BbpnError::invalid("QR iteration needs a square matrix"));
    }
    let mut cur = a.clone();
    let mut out = Vec::with_capacity(iterations);
    for k in 0..iterations {
        let qr = cur.clone().qr();
        cur = qr.r() * qr.q();
        if cur.iter().any(|v| !v.is_finite()) {
            return Err(BbpnError::Numeric(format!("QR iteration produced non-finite entries at step {}", k + 1)));
        }
        out.push(cur.diagonal());
    }
    Ok(out)
}

/// `diag(A_w)` of the Laplacian with `h` mapped to the iteration count `w`.
/// Ordinates are eigenvalue positions `1..=l m`; the truth is the spectrum in descending order.
#[derive(Clone, Debug)]
pub struct QrLaplacianAdapter {
    pub spec: LaplacianSpec,
    pub parameterization: HParameterization,
    matrix: DMatrix<f64>,
    truth: Vec<f64>,
}

impl QrLaplacianAdapter {
    pub fn new(spec: LaplacianSpec, parameterization: HParameterization) -> Result<Self> {
        let matrix = laplacian_matrix(spec)?;
        let mut truth = laplacian_eigenvalues(spec)?;
        truth.reverse();
        Ok(Self {
            spec,
            parameterization,
            matrix,
            truth,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl ProblemAdapter for QrLaplacianAdapter {
    fn name(&self) -> &str {
        "qr-laplacian"
    }

    fn run(&self, h: f64) -> Result<Vec<(Ordinate, f64)>> {
        let w = self.parameterization.iterations(h)?;
        let diags = qr_iteration(&self.matrix, w)?;
        let d = diags.last().expect("at least one iteration");
        Ok(d.iter().enumerate().map(|(i, &v)| (Ordinate::index(i + 1), v)).collect())
    }

    fn order_hint(&self) -> Option<f64> {
        None
    }

    fn p(&self) -> usize {
        1
    }

    fn query(&self) -> Vec<Ordinate> {
        (1..=self.spec.dim()).map(Ordinate::index).collect()
    }

    fn truth(&self, t: &Ordinate) -> Result<Option<f64>> {
        let i = t.block(0)[0] as usize;
        Ok(i.checked_sub(1).and_then(|k| self.truth.get(k)).copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn small_laplacians() {
        let a = laplacian_matrix(LaplacianSpec { l: 1, m: 1 }).unwrap();
        assert_eq!(a, DMatrix::from_element(1, 1, 4.0));
        let a = laplacian_matrix(LaplacianSpec { l: 2, m: 1 }).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[4.0, -1.0, -1.0, 4.0]));
        assert_relative_eq!(laplacian_eigenvalues(LaplacianSpec { l: 1, m: 1 }).unwrap()[0], 4.0, epsilon = 1e-14);
        let e = laplacian_eigenvalues(LaplacianSpec { l: 2, m: 1 }).unwrap();
        assert_relative_eq!(e[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(e[1], 5.0, epsilon = 1e-14);
    }

    #[test]
    fn closed_form_matches_dense_solver() {
        for (l, m) in [(3, 5), (5, 2), (4, 4)] {
            let spec = LaplacianSpec { l, m };
            let dense = dense_symmetric_eigenvalues(&laplacian_matrix(spec).unwrap());
            let closed = laplacian_eigenvalues(spec).unwrap();
            for (a, b) in dense.iter().zip(&closed) {
                assert_relative_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn qr_on_diagonal_and_two_by_two() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        for diag in qr_iteration(&d, 4).unwrap() {
            assert_relative_eq!(diag[0].abs(), 3.0, epsilon = 1e-14);
            assert_relative_eq!(diag[2].abs(), 1.0, epsilon = 1e-14);
        }
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let last = qr_iteration(&a, 30).unwrap().pop().unwrap();
        assert!((last[0] - 3.0).abs() < 1e-6 && (last[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn qr_preserves_trace() {
        let a = laplacian_matrix(LaplacianSpec { l: 5, m: 2 }).unwrap();
        for d in qr_iteration(&a, 10).unwrap() {
            assert_relative_eq!(d.sum(), a.trace(), epsilon = 1e-9);
        }
    }

    #[test]
    fn adapter_maps_h_to_iterations() {
        let ad = QrLaplacianAdapter::new(LaplacianSpec { l: 5, m: 2 }, HParameterization::InversePower { power: 1.0 }).unwrap();
        let out = ad.run(0.2).unwrap();
        assert_eq!(out.len(), 10);
        let direct = qr_iteration(ad.matrix(), 5).unwrap();
        assert_eq!(out[3].1, direct[4][3]);
        assert!(ad.run(0.3).is_err());
        let t1 = ad.truth(&Ordinate::index(1)).unwrap().unwrap();
        let t10 = ad.truth(&Ordinate::index(10)).unwrap().unwrap();
        assert!(t1 > t10);
    }
}
