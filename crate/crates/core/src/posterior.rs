//! Gaussian conditioning on a dataset and the limit marginal `Q(0, .) | D`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Ordinate};
use crate::error::{BbpnError, Result};
use crate::kernel::{assemble_gram, covariance_matrix, k_q, kernel_matrix, GpPrior, Hyperparameters, InputPoint};
use crate::linalg::{factorize, reconstruction_error, Factor};

/// Prior conditioned on a dataset. Immutable after construction.
#[derive(Clone, Debug)]
pub struct ConditionedModel {
    dataset: Dataset,
    params: Hyperparameters,
    prior: GpPrior,
    gram: DMatrix<f64>,
    factor: Factor,
    weights: DVector<f64>,
}

/// Posterior mean and variance at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Assembles, regularises and factorizes the Gram matrix, and solves for `K^{-1} q`.
pub fn condition(data: &Dataset, params: &Hyperparameters, prior: &GpPrior) -> Result<ConditionedModel> {
    if data.p() != prior.p() {
        return Err(BbpnError::invalid(format!(
            "dataset has {} ordinate blocks but the prior has {}",
            data.p(),
            prior.p()
        )));
    }
    let gram = assemble_gram(data, params, prior)?;
    let factor = factorize(&gram, prior.nugget)?;
    let weights = factor.solve(&data.values());
    Ok(ConditionedModel {
        dataset: data.clone(),
        params: params.clone(),
        prior: prior.clone(),
        gram,
        factor,
        weights,
    })
}

impl ConditionedModel {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn params(&self) -> &Hyperparameters {
        &self.params
    }

    pub fn prior(&self) -> &GpPrior {
        &self.prior
    }

    /// `K_Q^{-1} q`.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Absolute diagonal jitter that made the Gram matrix factorizable.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    /// Lower Cholesky factor of the regularised Gram matrix.
    pub fn factor(&self) -> DMatrix<f64> {
        self.factor.chol.l()
    }

    /// Relative Frobenius error of `L L^T` against the regularised Gram matrix.
    pub fn reconstruction_error(&self) -> f64 {
        reconstruction_error(&self.gram, &self.factor)
    }

    fn cross(&self, queries: &[InputPoint<'_>]) -> Result<DMatrix<f64>> {
        let pts: Vec<InputPoint<'_>> = self.dataset.data().iter().map(|d| (d.h, &d.t)).collect();
        kernel_matrix(&pts, queries, &self.params, &self.prior)
    }

    /// Mean and variance before clamping; the variance may be slightly negative from round-off.
    pub fn predict_raw(&self, h: f64, t: &Ordinate) -> Result<Prediction> {
        let prior_var = k_q(h, t, h, t, &self.params, &self.prior)?;
        let k = self.cross(&[(h, t)])?;
        let k = k.column(0).into_owned();
        let mean = k.dot(&self.weights);
        let v = self.factor.chol.l().solve_lower_triangular(&k).ok_or_else(|| {
            BbpnError::Numeric("triangular solve failed".into())
        })?;
        Ok(Prediction {
            mean,
            variance: prior_var - v.norm_squared(),
        })
    }

    /// Posterior mean and variance at `(h, t)`; variance clamped at zero.
    pub fn predict(&self, h: f64, t: &Ordinate) -> Result<Prediction> {
        let mut p = self.predict_raw(h, t)?;
        p.variance = p.variance.max(0.0);
        Ok(p)
    }

    /// Joint posterior of `Q(0, t)` over the query ordinates.
    pub fn predict_limit(&self, query: &[Ordinate]) -> Result<LimitPosterior> {
        if query.is_empty() {
            return Err(BbpnError::invalid("query set is empty"));
        }
        let qpts: Vec<InputPoint<'_>> = query.iter().map(|t| (0.0, t)).collect();
        let prior_cov = covariance_matrix(&qpts, &self.params, &self.prior)?;
        let k = self.cross(&qpts)?;
        let mean = k.transpose() * &self.weights;
        let v = self
            .factor
            .chol
            .l()
            .solve_lower_triangular(&k)
            .ok_or_else(|| BbpnError::Numeric("triangular solve failed".into()))?;
        let cov = prior_cov - v.transpose() * v;
        Ok(LimitPosterior {
            query: query.to_vec(),
            mean,
            covariance: clamp_psd(cov),
        })
    }

    /// Full posterior covariance between two query sets at arbitrary resolutions.
    pub fn posterior_covariance(&self, points: &[InputPoint<'_>]) -> Result<DMatrix<f64>> {
        let prior_cov = covariance_matrix(points, &self.params, &self.prior)?;
        let k = self.cross(points)?;
        let kinv_k = self.factor.solve_mat(&k);
        Ok(prior_cov - k.transpose() * kinv_k)
    }

}

/// Symmetrizes and floors negative eigenvalues at zero. Matrices that are already PSD are only symmetrized.
pub fn clamp_psd(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let mt = m.transpose();
    m = (&m + mt) * 0.5;
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        for i in 0..m.nrows() {
            m[(i, i)] = m[(i, i)].max(0.0);
        }
        return m;
    }
    let floored = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    let mut out = q * DMatrix::from_diagonal(&floored) * q.transpose();
    let ot = out.transpose();
    out = (&out + ot) * 0.5;
    for i in 0..out.nrows() {
        out[(i, i)] = out[(i, i)].max(0.0);
    }
    out
}

/// Gaussian summary of `Q(0, .) | D` on a query grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitPosterior {
    pub query: Vec<Ordinate>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl LimitPosterior {
    pub fn len(&self) -> usize {
        self.query.len()
    }

    pub fn is_empty(&self) -> bool {
        self.query.is_empty()
    }

    pub fn variances(&self) -> DVector<f64> {
        self.covariance.diagonal()
    }

    pub fn std_devs(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }

    /// Block-diagonal joint posterior of independently modelled outputs.
    pub fn block_diagonal(parts: Vec<LimitPosterior>) -> LimitPosterior {
        let n: usize = parts.iter().map(LimitPosterior::len).sum();
        let mut query = Vec::with_capacity(n);
        let mut mean = DVector::zeros(n);
        let mut covariance = DMatrix::zeros(n, n);
        let mut off = 0;
        for part in parts {
            let k = part.len();
            mean.rows_mut(off, k).copy_from(&part.mean);
            covariance.view_mut((off, off), (k, k)).copy_from(&part.covariance);
            query.extend(part.query);
            off += k;
        }
        LimitPosterior { query, mean, covariance }
    }
}

/// `mean -/+ width * sd` for every query point.
pub fn credible_band(post: &LimitPosterior, width_sigmas: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    if !(width_sigmas > 0.0 && width_sigmas.is_finite()) {
        return Err(BbpnError::invalid(format!("band width must be positive, got {width_sigmas}")));
    }
    let sd = post.std_devs();
    Ok((&post.mean - &sd * width_sigmas, &post.mean + &sd * width_sigmas))
}
