use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{HParameterization, Ordinate};
use crate::error::{BbpnError, Result};

use super::ProblemAdapter;

/// Dense order-`m`, dimension-`n` tensor stored row-major with `n^m` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricTensor {
    order: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl SymmetricTensor {
    /// Wraps raw entries after checking full permutation symmetry.
    pub fn from_entries(order: usize, dim: usize, entries: Vec<f64>) -> Result<Self> {
        if order < 2 || dim == 0 {
            return Err(BbpnError::invalid("tensor needs order >= 2 and dimension >= 1"));
        }
        if entries.len() != dim.pow(order as u32) {
            return Err(BbpnError::invalid("entry count must be dim^order"));
        }
        let t = Self { order, dim, entries };
        for lin in 0..t.entries.len() {
            let mut idx = t.unravel(lin);
            idx.sort_unstable();
            if t.entries[lin] != t.entries[t.ravel(&idx)] {
                return Err(BbpnError::invalid("tensor entries are not permutation symmetric"));
            }
        }
        Ok(t)
    }

    /// Symmetrisation of i.i.d. standard normal entries drawn from a seeded generator.
    pub fn random(order: usize, dim: usize, seed: u64) -> Result<Self> {
        if order < 2 || dim == 0 {
            return Err(BbpnError::invalid("tensor needs order >= 2 and dimension >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..dim.pow(order as u32)).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut t = Self { order, dim, entries: raw };
        // average over the orbit of each sorted index tuple
        let mut orbits: BTreeMap<Vec<usize>, (f64, usize)> = BTreeMap::new();
        for lin in 0..t.entries.len() {
            let mut idx = t.unravel(lin);
            idx.sort_unstable();
            let e = orbits.entry(idx).or_insert((0.0, 0));
            e.0 += t.entries[lin];
            e.1 += 1;
        }
        for lin in 0..t.entries.len() {
            let mut idx = t.unravel(lin);
            idx.sort_unstable();
            let (s, c) = orbits[&idx];
            t.entries[lin] = s / c as f64;
        }
        Ok(t)
    }

    /// `v^{(x) m}`.
    pub fn rank_one(v: &[f64], order: usize) -> Result<Self> {
        let dim = v.len();
        if order < 2 || dim == 0 {
            return Err(BbpnError::invalid("tensor needs order >= 2 and dimension >= 1"));
        }
        let mut t = Self {
            order,
            dim,
            entries: vec![0.0; dim.pow(order as u32)],
        };
        for lin in 0..t.entries.len() {
            t.entries[lin] = t.unravel(lin).iter().map(|&i| v[i]).product();
        }
        Ok(t)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[self.ravel(idx)]
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |a, b| a.max(b.abs()))
    }

    fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    fn unravel(&self, mut lin: usize) -> Vec<usize> {
        let mut idx = vec![0; self.order];
        for k in (0..self.order).rev() {
            idx[k] = lin % self.dim;
            lin /= self.dim;
        }
        idx
    }
}

/// `A x^{m-1}`: contraction of the last `m - 1` indices with `x`.
pub fn tensor_apply(a: &SymmetricTensor, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != a.dim {
        return Err(BbpnError::invalid(format!(
            "vector of length {} does not match tensor dimension {}",
            x.len(),
            a.dim
        )));
    }
    let mut cur = a.entries.clone();
    for _ in 1..a.order {
        cur = cur
            .chunks_exact(a.dim)
            .map(|row| row.iter().zip(x).map(|(r, xi)| r * xi).sum())
            .collect();
    }
    Ok(cur)
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Eigenvalue estimate and iterate of one power-method step.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerIterate {
    pub lambda: f64,
    pub x: Vec<f64>,
}

/// Residual `|| A x^{m-1} - lambda x ||`.
pub fn eigen_residual(a: &SymmetricTensor, lambda: f64, x: &[f64]) -> Result<f64> {
    let ax = tensor_apply(a, x)?;
    Ok(ax.iter().zip(x).map(|(u, v)| (u - lambda * v).powi(2)).sum::<f64>().sqrt())
}

/// Shifted symmetric higher-order power method. Element `k - 1` of the result
/// holds `x_k = normalize(A x_{k-1}^{m-1} + shift x_{k-1})` and `lambda_k = x_k' A x_k^{m-1}`.
pub fn shifted_power_method(a: &SymmetricTensor, x0: &[f64], shift: f64, iterations: usize) -> Result<Vec<PowerIterate>> {
    let n0 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (n0 - 1.0).abs() > 1e-10 {
        return Err(BbpnError::invalid("initial vector must have unit norm"));
    }
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(iterations);
    for k in 1..=iterations {
        let ax = tensor_apply(a, &x)?;
        let mut next: Vec<f64> = ax.iter().zip(&x).map(|(u, v)| u + shift * v).collect();
        let norm = normalize(&mut next);
        if !(norm > 1e-300) || !norm.is_finite() {
            return Err(BbpnError::Breakdown { iteration: k });
        }
        let axn = tensor_apply(a, &next)?;
        let lambda = axn.iter().zip(&next).map(|(u, v)| u * v).sum();
        x = next;
        out.push(PowerIterate { lambda, x: x.clone() });
    }
    Ok(out)
}

/// Seeded unit starting vector.
pub fn random_unit_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    v
}

/// Default shift `2 max |a_i|`.
pub fn default_shift(a: &SymmetricTensor) -> f64 {
    2.0 * a.max_abs_entry()
}

/// Power-method eigenvalue after `w` iterations, `h` mapped to `w`. Scalar output.
#[derive(Debug)]
pub struct TensorAdapter {
    pub tensor: SymmetricTensor,
    pub x0: Vec<f64>,
    pub shift: f64,
    pub parameterization: HParameterization,
    /// Iteration budget for the converged reference.
    pub reference_iterations: usize,
    reference: OnceLock<std::result::Result<PowerIterate, String>>,
}

impl TensorAdapter {
    pub fn new(
        tensor: SymmetricTensor,
        x0: Vec<f64>,
        shift: f64,
        parameterization: HParameterization,
        reference_iterations: usize,
    ) -> Self {
        Self {
            tensor,
            x0,
            shift,
            parameterization,
            reference_iterations,
            reference: OnceLock::new(),
        }
    }

    /// Seeded random tensor and starting vector with the default shift.
    pub fn seeded(order: usize, dim: usize, seed: u64, shift: Option<f64>, parameterization: HParameterization) -> Result<Self> {
        let tensor = SymmetricTensor::random(order, dim, seed)?;
        let x0 = random_unit_vector(dim, seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        let shift = shift.unwrap_or_else(|| default_shift(&tensor));
        Ok(Self::new(tensor, x0, shift, parameterization, 200_000))
    }

    /// Iterates in chunks until the eigen-residual falls below `1e-13` or the budget runs out.
    pub fn converged(&self) -> Result<PowerIterate> {
        self.reference
            .get_or_init(|| self.converge().map_err(|e| e.to_string()))
            .clone()
            .map_err(BbpnError::Numeric)
    }

    fn converge(&self) -> Result<PowerIterate> {
        let mut x = self.x0.clone();
        let mut last = None;
        let chunk = 1000;
        let mut done = 0;
        while done < self.reference_iterations {
            let its = shifted_power_method(&self.tensor, &x, self.shift, chunk)?;
            let it = its.last().unwrap().clone();
            done += chunk;
            let res = eigen_residual(&self.tensor, it.lambda, &it.x)?;
            x = it.x.clone();
            last = Some(it);
            if res < 1e-13 {
                break;
            }
        }
        Ok(last.expect("at least one chunk"))
    }
}

impl ProblemAdapter for TensorAdapter {
    fn name(&self) -> &str {
        "tensor-power"
    }

    fn run(&self, h: f64) -> Result<Vec<(Ordinate, f64)>> {
        let w = self.parameterization.iterations(h)?;
        let its = shifted_power_method(&self.tensor, &self.x0, self.shift, w)?;
        Ok(vec![(Ordinate::empty(), its.last().unwrap().lambda)])
    }

    fn order_hint(&self) -> Option<f64> {
        None
    }

    fn p(&self) -> usize {
        0
    }

    fn query(&self) -> Vec<Ordinate> {
        vec![Ordinate::empty()]
    }

    fn truth(&self, _t: &Ordinate) -> Result<Option<f64>> {
        Ok(Some(self.converged()?.lambda))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn brute_apply(a: &SymmetricTensor, x: &[f64]) -> Vec<f64> {
        // explicit nested loops for order 4
        let n = a.dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        out[i] += a.get(&[i, j, k, l]) * x[j] * x[k] * x[l];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn random_tensor_is_symmetric() {
        let a = SymmetricTensor::random(4, 3, 7).unwrap();
        assert_eq!(a.get(&[0, 1, 2, 2]), a.get(&[2, 1, 2, 0]));
        assert!(SymmetricTensor::from_entries(4, 3, a.entries().to_vec()).is_ok());
    }

    #[test]
    fn apply_matches_nested_loops() {
        let a = SymmetricTensor::random(4, 3, 11).unwrap();
        let x = random_unit_vector(3, 5);
        let fast = tensor_apply(&a, &x).unwrap();
        let slow = brute_apply(&a, &x);
        for (u, v) in fast.iter().zip(&slow) {
            assert_relative_eq!(u, v, epsilon = 1e-12);
        }
        assert!(tensor_apply(&a, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn order_two_is_matrix_vector() {
        let a = SymmetricTensor::from_entries(2, 2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
        assert_eq!(tensor_apply(&a, &[1.0, 2.0]).unwrap(), vec![4.0, 7.0]);
    }

    #[test]
    fn rank_one_fixed_point() {
        let v = random_unit_vector(4, 3);
        let a = SymmetricTensor::rank_one(&v, 3).unwrap();
        let av = tensor_apply(&a, &v).unwrap();
        for (x, y) in av.iter().zip(&v) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        for it in shifted_power_method(&a, &v, 1.0, 5).unwrap() {
            assert_relative_eq!(it.lambda, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_matrix_eigenvector_is_fixed() {
        let a = SymmetricTensor::from_entries(2, 2, vec![2.0, 0.0, 0.0, 1.0]).unwrap();
        for it in shifted_power_method(&a, &[1.0, 0.0], 0.0, 4).unwrap() {
            assert_eq!(it.lambda, 2.0);
        }
    }

    #[test]
    fn zero_update_breaks_down() {
        let a = SymmetricTensor::from_entries(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(
            shifted_power_method(&a, &[1.0, 0.0], 0.0, 3),
            Err(BbpnError::Breakdown { iteration: 1 })
        ));
    }

    #[test]
    fn converged_pair_has_small_residual() {
        let ad = TensorAdapter::seeded(6, 6, 1, None, HParameterization::InversePower { power: 2.0 }).unwrap();
        let pair = ad.converged().unwrap();
        assert!(eigen_residual(&ad.tensor, pair.lambda, &pair.x).unwrap() < 1e-8);
    }
}
