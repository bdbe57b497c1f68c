use std::f64::consts::{E, PI};

use crate::dataset::Ordinate;
use crate::error::{BbpnError, Result};

use super::ProblemAdapter;

/// Left Riemann sum with cell width `h`; a final partial cell is weighted by its truncated width.
pub fn riemann_sum<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(BbpnError::invalid(format!("cell width must be positive, got {h}")));
    }
    if !(b > a) {
        return Err(BbpnError::invalid("integration interval must satisfy b > a"));
    }
    let len = b - a;
    if h > len * (1.0 + 1e-12) {
        return Err(BbpnError::invalid(format!("cell width {h} exceeds the interval length {len}")));
    }
    let full = (len / h * (1.0 + 1e-12)).floor() as usize;
    let mut sum = 0.0;
    for k in 0..full {
        sum += f(a + k as f64 * h);
    }
    sum *= h;
    let rest = len - full as f64 * h;
    if rest > 1e-12 * len {
        sum += f(a + full as f64 * h) * rest;
    }
    Ok(sum)
}

/// Oscillatory test integrand whose integral over `[0, 1]` is `e - 1`.
pub fn oscillatory_integrand(x: f64) -> f64 {
    let s = (4.0 * PI * x).sin();
    s * s + x.exp() - 2.5 * x.powi(4) + 0.5 * (16.0 * PI * x).cos() + 0.25 * (20.0 * PI * x).cos()
}

/// Left Riemann sums of [`oscillatory_integrand`] on `[a, b]`. Scalar output, no ordinate blocks.
#[derive(Clone, Debug)]
pub struct RiemannAdapter {
    pub a: f64,
    pub b: f64,
}

impl Default for RiemannAdapter {
    fn default() -> Self {
        Self { a: 0.0, b: 1.0 }
    }
}

fn antiderivative(x: f64) -> f64 {
    // sin^2(4 pi x) = (1 - cos(8 pi x)) / 2
    0.5 * x - (8.0 * PI * x).sin() / (16.0 * PI) + x.exp() - 0.5 * x.powi(5)
        + (16.0 * PI * x).sin() / (32.0 * PI)
        + (20.0 * PI * x).sin() / (80.0 * PI)
}

impl ProblemAdapter for RiemannAdapter {
    fn name(&self) -> &str {
        "riemann"
    }

    fn run(&self, h: f64) -> Result<Vec<(Ordinate, f64)>> {
        Ok(vec![(Ordinate::empty(), riemann_sum(oscillatory_integrand, self.a, self.b, h)?)])
    }

    fn order_hint(&self) -> Option<f64> {
        Some(1.0)
    }

    fn p(&self) -> usize {
        0
    }

    fn query(&self) -> Vec<Ordinate> {
        vec![Ordinate::empty()]
    }

    fn truth(&self, _t: &Ordinate) -> Result<Option<f64>> {
        if self.a == 0.0 && self.b == 1.0 {
            return Ok(Some(E - 1.0));
        }
        Ok(Some(antiderivative(self.b) - antiderivative(self.a)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hand_sums() {
        assert_eq!(riemann_sum(|_| 1.0, 0.0, 1.0, 0.5).unwrap(), 1.0);
        assert_relative_eq!(riemann_sum(|x| x, 0.0, 1.0, 0.25).unwrap(), 0.375, epsilon = 1e-15);
        // 0.4 + partial cell of width 0.2: x = 0, 0.4 then 0.8 with width 0.2
        assert_relative_eq!(riemann_sum(|x| x, 0.0, 1.0, 0.4).unwrap(), 0.4 * 0.4 + 0.8 * 0.2, epsilon = 1e-15);
        assert!(riemann_sum(|x| x, 0.0, 1.0, 0.0).is_err());
        assert!(riemann_sum(|x| x, 0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn integrand_values() {
        assert_relative_eq!(oscillatory_integrand(0.0), 1.75, epsilon = 1e-15);
        assert_relative_eq!(oscillatory_integrand(1.0), E - 2.5 + 0.75, epsilon = 1e-12);
        assert_relative_eq!(antiderivative(1.0) - antiderivative(0.0), E - 1.0, epsilon = 1e-14);
    }

    #[test]
    fn first_order_convergence() {
        let hs = [0.01, 0.005, 0.0025, 0.00125];
        let pts: Vec<(f64, f64)> = hs
            .iter()
            .map(|&h| (h, (riemann_sum(oscillatory_integrand, 0.0, 1.0, h).unwrap() - (E - 1.0)).abs()))
            .collect();
        let slope = crate::metrics::convergence_slope(&pts).unwrap();
        assert!((slope - 1.0).abs() < 0.2, "slope {slope}");
    }
}
