//! Covariance model for the joint process `Q(h, t)`.
//!
//! The prior on the limit `Q(0, t)` is a Gaussian process with covariance
//! `sigma2 * (b(t).b(t') + rho_g * k_G(t, t'))` and the discretisation error
//! `E(h, t)` is an independent process with covariance
//! `sigma2 * rho_e * (h h')^alpha * psi(|h - h'| / ell_h) * k_G(t, t')`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Ordinate};
use crate::error::{BbpnError, Result};

/// Isotropic radial profile `phi(eps)` with `phi(0) = 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadialProfile {
    #[default]
    Matern12,
    Matern32,
    Gaussian,
}

impl RadialProfile {
    /// Evaluates the profile. `eps` is assumed non-negative and finite.
    #[inline]
    pub fn value(self, eps: f64) -> f64 {
        match self {
            RadialProfile::Matern12 => (-eps).exp(),
            RadialProfile::Matern32 => {
                let s = 3f64.sqrt() * eps;
                (1.0 + s) * (-s).exp()
            }
            RadialProfile::Gaussian => (-0.5 * eps * eps).exp(),
        }
    }

    /// Derivative `d phi / d eps`.
    #[inline]
    pub fn derivative(self, eps: f64) -> f64 {
        match self {
            RadialProfile::Matern12 => -(-eps).exp(),
            RadialProfile::Matern32 => {
                let s = 3f64.sqrt() * eps;
                -3.0 * eps * (-s).exp()
            }
            RadialProfile::Gaussian => -eps * (-0.5 * eps * eps).exp(),
        }
    }

    /// Validating evaluation.
    pub fn eval(self, eps: f64) -> Result<f64> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(BbpnError::invalid(format!(
                "radial argument must be finite and non-negative, got {eps}"
            )));
        }
        Ok(self.value(eps))
    }

    pub fn name(self) -> &'static str {
        match self {
            RadialProfile::Matern12 => "matern12",
            RadialProfile::Matern32 => "matern32",
            RadialProfile::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RadialProfile {
    type Err = BbpnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "matern12" | "matern-1/2" | "exponential" => Ok(RadialProfile::Matern12),
            "matern32" | "matern-3/2" => Ok(RadialProfile::Matern32),
            "gaussian" | "rbf" | "squared-exponential" => Ok(RadialProfile::Gaussian),
            other => Err(BbpnError::invalid(format!("unknown kernel profile `{other}`"))),
        }
    }
}

/// One basis function of the parametric part of the prior mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisFunction {
    Constant,
    /// `t^power` evaluated on the first coordinate of the given block.
    Monomial { block: usize, power: u32 },
}

impl BasisFunction {
    fn eval(&self, t: &Ordinate) -> f64 {
        match *self {
            BasisFunction::Constant => 1.0,
            BasisFunction::Monomial { block, power } => {
                let x = t.block(block).first().copied().unwrap_or(0.0);
                x.powi(power as i32)
            }
        }
    }
}

/// Ordered list of basis functions `b_1 .. b_v`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BasisSet {
    functions: Vec<BasisFunction>,
}

impl BasisSet {
    pub fn new(functions: Vec<BasisFunction>) -> Self {
        Self { functions }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn constant() -> Self {
        Self::new(vec![BasisFunction::Constant])
    }

    /// Constant plus monomials of degree `1 .. v-1` in the first block; `v = 0` is empty.
    pub fn polynomial(v: usize) -> Self {
        let mut functions = Vec::with_capacity(v);
        if v > 0 {
            functions.push(BasisFunction::Constant);
        }
        for power in 1..v {
            functions.push(BasisFunction::Monomial {
                block: 0,
                power: power as u32,
            });
        }
        Self::new(functions)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn functions(&self) -> &[BasisFunction] {
        &self.functions
    }

    pub fn eval(&self, t: &Ordinate) -> Vec<f64> {
        self.functions.iter().map(|b| b.eval(t)).collect()
    }

    /// `b(t) . b(t')`.
    pub fn dot(&self, t: &Ordinate, t2: &Ordinate) -> f64 {
        self.functions.iter().map(|b| b.eval(t) * b.eval(t2)).sum()
    }
}

/// Structural choices of the prior. Hyperparameter values live in [`Hyperparameters`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpPrior {
    /// Profile of the error kernel in the resolution direction.
    pub psi: RadialProfile,
    /// One profile per ordinate block.
    pub phi: Vec<RadialProfile>,
    pub basis: BasisSet,
    /// Ablation: error process stationary in `h` (requires `alpha = 0`).
    #[serde(default)]
    pub stationary: bool,
    /// Relative diagonal jitter `tau`; the Gram matrix receives `tau * trace / m` on its diagonal.
    #[serde(default = "default_nugget")]
    pub nugget: f64,
}

fn default_nugget() -> f64 {
    1e-10
}

impl GpPrior {
    /// Same profile in every direction.
    pub fn new(p: usize, profile: RadialProfile, basis: BasisSet) -> Self {
        Self {
            psi: profile,
            phi: vec![profile; p],
            basis,
            stationary: false,
            nugget: default_nugget(),
        }
    }

    pub fn with_nugget(mut self, nugget: f64) -> Self {
        self.nugget = nugget;
        self
    }

    pub fn with_stationary(mut self, stationary: bool) -> Self {
        self.stationary = stationary;
        self
    }

    pub fn p(&self) -> usize {
        self.phi.len()
    }
}

/// A free hyperparameter in the profile likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    RhoG,
    RhoE,
    EllH,
    EllT(usize),
    Alpha,
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::RhoG => f.write_str("rho_g"),
            Param::RhoE => f.write_str("rho_e"),
            Param::EllH => f.write_str("ell_h"),
            Param::EllT(i) => write!(f, "ell_t[{i}]"),
            Param::Alpha => f.write_str("alpha"),
        }
    }
}

/// Parameters optimised by maximum likelihood, in a fixed order.
pub fn free_params(p: usize, learn_alpha: bool) -> Vec<Param> {
    let mut out = vec![Param::RhoG, Param::RhoE, Param::EllH];
    out.extend((0..p).map(Param::EllT));
    if learn_alpha {
        out.push(Param::Alpha);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub sigma2: f64,
    pub rho_g: f64,
    pub rho_e: f64,
    pub ell_h: f64,
    pub ell_t: Vec<f64>,
    pub alpha: f64,
    pub alpha_learned: bool,
}

impl Hyperparameters {
    /// Unit scales for `p` blocks with the given `alpha`.
    pub fn unit(p: usize, alpha: f64) -> Self {
        Self {
            sigma2: 1.0,
            rho_g: 1.0,
            rho_e: 1.0,
            ell_h: 1.0,
            ell_t: vec![1.0; p],
            alpha,
            alpha_learned: false,
        }
    }

    pub fn get(&self, param: Param) -> f64 {
        match param {
            Param::RhoG => self.rho_g,
            Param::RhoE => self.rho_e,
            Param::EllH => self.ell_h,
            Param::EllT(i) => self.ell_t[i],
            Param::Alpha => self.alpha,
        }
    }

    pub fn set(&mut self, param: Param, value: f64) {
        match param {
            Param::RhoG => self.rho_g = value,
            Param::RhoE => self.rho_e = value,
            Param::EllH => self.ell_h = value,
            Param::EllT(i) => self.ell_t[i] = value,
            Param::Alpha => self.alpha = value,
        }
    }

    /// Checks positivity and consistency with the prior.
    pub fn validate(&self, prior: &GpPrior) -> Result<()> {
        let non_negative = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(BbpnError::invalid(format!("{name} must be non-negative and finite, got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(BbpnError::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        non_negative("sigma2", self.sigma2)?;
        non_negative("rho_g", self.rho_g)?;
        non_negative("rho_e", self.rho_e)?;
        positive("ell_h", self.ell_h)?;
        if self.ell_t.len() != prior.p() {
            return Err(BbpnError::invalid(format!(
                "expected {} ordinate length-scales, got {}",
                prior.p(),
                self.ell_t.len()
            )));
        }
        for &l in &self.ell_t {
            positive("ell_t", l)?;
        }
        if prior.stationary {
            if self.alpha != 0.0 || self.alpha_learned {
                return Err(BbpnError::invalid(
                    "the stationary error kernel requires a fixed alpha = 0",
                ));
            }
        } else {
            positive("alpha", self.alpha)?;
        }
        Ok(())
    }
}

#[inline]
fn block_eps(t: &Ordinate, t2: &Ordinate, i: usize, ell: f64) -> f64 {
    t.block_distance(t2, i) / ell
}

#[inline]
fn kg_unchecked(t: &Ordinate, t2: &Ordinate, params: &Hyperparameters, phi: &[RadialProfile]) -> f64 {
    phi.iter()
        .enumerate()
        .map(|(i, prof)| prof.value(block_eps(t, t2, i, params.ell_t[i])))
        .product()
}

#[inline]
fn resolution_factor(h: f64, h2: f64, alpha: f64) -> f64 {
    (h * h2).powf(alpha)
}

#[inline]
fn kq_unchecked(
    h: f64,
    t: &Ordinate,
    h2: f64,
    t2: &Ordinate,
    params: &Hyperparameters,
    prior: &GpPrior,
) -> f64 {
    let kg = kg_unchecked(t, t2, params, &prior.phi);
    let eps_h = (h - h2).abs() / params.ell_h;
    let ke = resolution_factor(h, h2, params.alpha) * prior.psi.value(eps_h) * kg;
    params.sigma2 * (prior.basis.dot(t, t2) + params.rho_g * kg + params.rho_e * ke)
}

fn check_ordinates(t: &Ordinate, t2: &Ordinate, p: usize) -> Result<()> {
    if t.num_blocks() != p || t2.num_blocks() != p {
        return Err(BbpnError::invalid(format!(
            "ordinates must have {p} blocks, got {} and {}",
            t.num_blocks(),
            t2.num_blocks()
        )));
    }
    for i in 0..p {
        if t.block(i).len() != t2.block(i).len() {
            return Err(BbpnError::invalid(format!("block {i} dimension mismatch")));
        }
    }
    Ok(())
}

/// Product kernel over the ordinate blocks.
pub fn k_g(t: &Ordinate, t2: &Ordinate, params: &Hyperparameters, phi: &[RadialProfile]) -> Result<f64> {
    check_ordinates(t, t2, phi.len())?;
    if params.ell_t.len() != phi.len() || params.ell_t.iter().any(|&l| !(l > 0.0)) {
        return Err(BbpnError::invalid("length-scales must be positive, one per block"));
    }
    Ok(kg_unchecked(t, t2, params, phi))
}

/// Error-process kernel (unit `sigma2` and `rho_e`).
pub fn k_e(
    h: f64,
    t: &Ordinate,
    h2: f64,
    t2: &Ordinate,
    params: &Hyperparameters,
    prior: &GpPrior,
) -> Result<f64> {
    check_resolutions(h, h2)?;
    let kg = k_g(t, t2, params, &prior.phi)?;
    if !(params.ell_h > 0.0) {
        return Err(BbpnError::invalid("ell_h must be positive"));
    }
    let eps_h = (h - h2).abs() / params.ell_h;
    Ok(resolution_factor(h, h2, params.alpha) * prior.psi.value(eps_h) * kg)
}

/// Full covariance `k_Q((h, t), (h', t'))`.
pub fn k_q(
    h: f64,
    t: &Ordinate,
    h2: f64,
    t2: &Ordinate,
    params: &Hyperparameters,
    prior: &GpPrior,
) -> Result<f64> {
    check_resolutions(h, h2)?;
    params.validate(prior)?;
    check_ordinates(t, t2, prior.p())?;
    Ok(kq_unchecked(h, t, h2, t2, params, prior))
}

fn check_resolutions(h: f64, h2: f64) -> Result<()> {
    if !(h >= 0.0 && h2 >= 0.0 && h.is_finite() && h2.is_finite()) {
        return Err(BbpnError::invalid(format!(
            "resolutions must be finite and non-negative, got {h} and {h2}"
        )));
    }
    Ok(())
}

/// A point `(h, t)` of the joint input space.
pub type InputPoint<'a> = (f64, &'a Ordinate);

/// Dense covariance between two point sets.
pub fn kernel_matrix(
    rows: &[InputPoint<'_>],
    cols: &[InputPoint<'_>],
    params: &Hyperparameters,
    prior: &GpPrior,
) -> Result<DMatrix<f64>> {
    params.validate(prior)?;
    for &(h, t) in rows.iter().chain(cols) {
        check_resolutions(h, 0.0)?;
        check_ordinates(t, t, prior.p())?;
    }
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        kq_unchecked(rows[i].0, rows[i].1, cols[j].0, cols[j].1, params, prior)
    }))
}

fn dataset_points(data: &Dataset) -> Vec<InputPoint<'_>> {
    data.data().iter().map(|d| (d.h, &d.t)).collect()
}

/// Gram matrix `K_Q` of a dataset, without nugget.
pub fn assemble_gram(data: &Dataset, params: &Hyperparameters, prior: &GpPrior) -> Result<DMatrix<f64>> {
    let pts = dataset_points(data);
    symmetric_kernel_matrix(&pts, params, prior)
}

fn symmetric_kernel_matrix(
    pts: &[InputPoint<'_>],
    params: &Hyperparameters,
    prior: &GpPrior,
) -> Result<DMatrix<f64>> {
    params.validate(prior)?;
    for &(h, t) in pts {
        check_resolutions(h, 0.0)?;
        check_ordinates(t, t, prior.p())?;
    }
    let m = pts.len();
    let mut k = DMatrix::zeros(m, m);
    for j in 0..m {
        for i in j..m {
            let v = kq_unchecked(pts[i].0, pts[i].1, pts[j].0, pts[j].1, params, prior);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Covariance matrix of a point set (symmetric by construction).
pub fn covariance_matrix(
    pts: &[InputPoint<'_>],
    params: &Hyperparameters,
    prior: &GpPrior,
) -> Result<DMatrix<f64>> {
    symmetric_kernel_matrix(pts, params, prior)
}

/// Derivatives of the unit-scale Gram matrix `K_Q / sigma2` with respect to
/// each free parameter, in the order of [`free_params`].
pub fn gram_gradients(
    data: &Dataset,
    params: &Hyperparameters,
    prior: &GpPrior,
) -> Result<Vec<(Param, DMatrix<f64>)>> {
    params.validate(prior)?;
    let p = prior.p();
    let order = free_params(p, params.alpha_learned);
    let pts = dataset_points(data);
    for &(_, t) in &pts {
        check_ordinates(t, t, p)?;
    }
    let m = pts.len();
    let mut mats: Vec<DMatrix<f64>> = order.iter().map(|_| DMatrix::zeros(m, m)).collect();
    let mut phis = vec![0.0; p];
    let mut dphis = vec![0.0; p];
    let mut eps = vec![0.0; p];
    for j in 0..m {
        for i in j..m {
            let (h, t) = pts[i];
            let (h2, t2) = pts[j];
            for b in 0..p {
                eps[b] = block_eps(t, t2, b, params.ell_t[b]);
                phis[b] = prior.phi[b].value(eps[b]);
                dphis[b] = prior.phi[b].derivative(eps[b]);
            }
            let kg: f64 = phis.iter().product();
            let eps_h = (h - h2).abs() / params.ell_h;
            let hp = resolution_factor(h, h2, params.alpha);
            let psi = prior.psi.value(eps_h);
            let ke = hp * psi * kg;
            let hh = h * h2;
            for (slot, param) in order.iter().enumerate() {
                let v = match *param {
                    Param::RhoG => kg,
                    Param::RhoE => ke,
                    Param::EllH => params.rho_e * hp * prior.psi.derivative(eps_h) * (-eps_h / params.ell_h) * kg,
                    Param::EllT(b) => {
                        let others: f64 = (0..p).filter(|&c| c != b).map(|c| phis[c]).product();
                        let dkg = others * dphis[b] * (-eps[b] / params.ell_t[b]);
                        (params.rho_g + params.rho_e * hp * psi) * dkg
                    }
                    Param::Alpha => {
                        if hh > 0.0 {
                            params.rho_e * ke * hh.ln()
                        } else {
                            0.0
                        }
                    }
                };
                mats[slot][(i, j)] = v;
                mats[slot][(j, i)] = v;
            }
        }
    }
    Ok(order.into_iter().zip(mats).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pt(x: f64) -> Ordinate {
        Ordinate::new(vec![vec![x]])
    }

    #[test]
    fn profiles_at_zero_and_one() {
        for prof in [RadialProfile::Matern12, RadialProfile::Matern32, RadialProfile::Gaussian] {
            assert_eq!(prof.eval(0.0).unwrap(), 1.0);
        }
        assert_relative_eq!(RadialProfile::Matern12.eval(1.0).unwrap(), (-1f64).exp(), epsilon = 1e-15);
        let s3 = 3f64.sqrt();
        assert_relative_eq!(
            RadialProfile::Matern32.eval(1.0).unwrap(),
            (1.0 + s3) * (-s3).exp(),
            epsilon = 1e-15
        );
        assert_relative_eq!(RadialProfile::Gaussian.eval(1.0).unwrap(), (-0.5f64).exp(), epsilon = 1e-15);
        assert!(RadialProfile::Matern12.eval(-0.1).is_err());
        assert!(RadialProfile::Gaussian.eval(f64::NAN).is_err());
    }

    #[test]
    fn profile_derivatives_match_finite_differences() {
        for prof in [RadialProfile::Matern12, RadialProfile::Matern32, RadialProfile::Gaussian] {
            for &e in &[0.1, 0.7, 2.5] {
                let d = 1e-6;
                let fd = (prof.value(e + d) - prof.value(e - d)) / (2.0 * d);
                assert_relative_eq!(prof.derivative(e), fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn kernel_vanishes_correctly_at_zero_resolution() {
        let prior = GpPrior::new(1, RadialProfile::Matern12, BasisSet::empty());
        let params = Hyperparameters::unit(1, 1.0);
        let t = pt(0.3);
        assert_eq!(k_e(0.0, &t, 0.5, &t, &params, &prior).unwrap(), 0.0);
        let kq = k_q(0.0, &t, 0.0, &t, &params, &prior).unwrap();
        assert_relative_eq!(kq, params.sigma2 * params.rho_g, epsilon = 1e-15);
    }

    #[test]
    fn stationary_requires_zero_alpha() {
        let prior = GpPrior::new(1, RadialProfile::Matern12, BasisSet::empty()).with_stationary(true);
        let mut params = Hyperparameters::unit(1, 1.0);
        assert!(params.validate(&prior).is_err());
        params.alpha = 0.0;
        assert!(params.validate(&prior).is_ok());
        let nonstat = GpPrior::new(1, RadialProfile::Matern12, BasisSet::empty());
        assert!(params.validate(&nonstat).is_err());
        // with alpha = 0 the error kernel stays alive at h = 0
        let t = pt(0.0);
        assert_eq!(k_e(0.0, &t, 0.0, &t, &params, &prior).unwrap(), 1.0);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let prior = GpPrior::new(1, RadialProfile::Matern12, BasisSet::empty());
        let params = Hyperparameters::unit(1, 1.0);
        let t = pt(0.0);
        assert!(k_q(-0.1, &t, 0.1, &t, &params, &prior).is_err());
        let mut bad = params.clone();
        bad.ell_h = 0.0;
        assert!(k_q(0.1, &t, 0.1, &t, &bad, &prior).is_err());
        let two = Ordinate::new(vec![vec![0.0], vec![1.0]]);
        assert!(k_q(0.1, &t, 0.1, &two, &params, &prior).is_err());
    }

    #[test]
    fn polynomial_basis() {
        let b = BasisSet::polynomial(3);
        assert_eq!(b.eval(&pt(2.0)), vec![1.0, 2.0, 4.0]);
        assert!(BasisSet::polynomial(0).is_empty());
        assert_relative_eq!(b.dot(&pt(2.0), &pt(3.0)), 1.0 + 6.0 + 36.0);
    }
}
