//! Kuramoto-Sivashinsky equation `u_t + u_xxxx + u_xx + u u_x = 0` on the periodic
//! domain `[0, 2 pi L)`, Fourier pseudo-spectral in space and ETDRK4 in time.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dataset::Ordinate;
use crate::error::{BbpnError, Result};

use super::ProblemAdapter;

/// Number of contour points used to evaluate the ETDRK4 coefficients.
const CONTOUR_POINTS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    /// `amplitude * exp(-((x - c) / width)^2)` with `c = center_fraction * 2 pi L`.
    Gaussian {
        amplitude: f64,
        width: f64,
        center_fraction: f64,
    },
    /// `cos(x / L) (1 + sin(x / L))`.
    Cosine,
}

impl InitialCondition {
    fn eval(&self, x: f64, length_scale: f64) -> f64 {
        match *self {
            InitialCondition::Gaussian {
                amplitude,
                width,
                center_fraction,
            } => {
                let c = center_fraction * 2.0 * PI * length_scale;
                let z = (x - c) / width;
                amplitude * (-z * z).exp()
            }
            InitialCondition::Cosine => {
                let s = x / length_scale;
                s.cos() * (1.0 + s.sin())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KseConfig {
    pub grid_size: usize,
    pub length_scale: f64,
    pub dt: f64,
    pub t_end: f64,
    pub initial: InitialCondition,
    #[serde(default = "yes")]
    pub nonlinear: bool,
}

fn yes() -> bool {
    true
}

impl KseConfig {
    /// Grid spacing `2 pi L / N`.
    pub fn dx(&self) -> f64 {
        2.0 * PI * self.length_scale / self.grid_size as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.grid_size).map(|j| j as f64 * dx).collect()
    }

    fn steps(&self) -> Result<usize> {
        if self.grid_size < 4 || self.grid_size % 2 != 0 {
            return Err(BbpnError::invalid("grid size must be even and at least 4"));
        }
        if !(self.length_scale > 0.0 && self.dt > 0.0 && self.t_end > 0.0) {
            return Err(BbpnError::invalid("length scale, time step and final time must be positive"));
        }
        let n = (self.t_end / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(BbpnError::invalid(format!(
                "time step {} does not divide the final time {}",
                self.dt, self.t_end
            )));
        }
        Ok(n as usize)
    }

    /// Scaled wavenumbers `k / L`, with the Nyquist mode set to zero.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.grid_size as i64;
        (0..n)
            .map(|j| {
                let k = if j < n / 2 {
                    j
                } else if j == n / 2 {
                    0
                } else {
                    j - n
                };
                k as f64 / self.length_scale
            })
            .collect()
    }

    /// Linear symbol `k^2 - k^4` (scaled wavenumbers).
    pub fn linear_symbol(&self) -> Vec<f64> {
        self.wavenumbers().iter().map(|k| k * k - k.powi(4)).collect()
    }
}

/// Per-mode ETDRK4 coefficients for a diagonal linear operator.
#[derive(Clone, Debug)]
pub struct Etdrk4 {
    pub e: Vec<f64>,
    pub e2: Vec<f64>,
    pub q: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f3: Vec<f64>,
}

impl Etdrk4 {
    /// Coefficients by averaging over points on a unit circle around each `L_k dt`.
    pub fn new(linear: &[f64], dt: f64) -> Self {
        let roots: Vec<Complex64> = (1..=CONTOUR_POINTS)
            .map(|j| Complex64::from_polar(1.0, PI * (j as f64 - 0.5) / CONTOUR_POINTS as f64))
            .collect();
        let n = linear.len();
        let mut c = Etdrk4 {
            e: Vec::with_capacity(n),
            e2: Vec::with_capacity(n),
            q: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f3: Vec::with_capacity(n),
        };
        let m = CONTOUR_POINTS as f64;
        for &l in linear {
            let hl = dt * l;
            c.e.push(hl.exp());
            c.e2.push((0.5 * hl).exp());
            let (mut q, mut f1, mut f2, mut f3) = (0.0, 0.0, 0.0, 0.0);
            for r in &roots {
                let z = Complex64::new(hl, 0.0) + r;
                let ez = z.exp();
                let z3 = z * z * z;
                q += (((z * 0.5).exp() - 1.0) / z).re;
                f1 += ((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3).re;
                f2 += ((2.0 + z + ez * (z - 2.0)) / z3).re;
                f3 += ((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3).re;
            }
            c.q.push(dt * q / m);
            c.f1.push(dt * f1 / m);
            c.f2.push(dt * f2 / m);
            c.f3.push(dt * f3 / m);
        }
        c
    }
}

/// Real-space solution at the final time.
#[derive(Clone, Debug, PartialEq)]
pub struct KseSolution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Largest imaginary part after the final inverse transform, relative to `max |u|`.
    pub imaginary_ratio: f64,
}

struct Spectral {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    n: usize,
}

impl Spectral {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            n,
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }

    /// `g * fft(real(ifft(v))^2)` with `g = -i k / 2`.
    fn nonlinear(&self, v: &[Complex64], g: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(v);
        self.inverse(out);
        for z in out.iter_mut() {
            *z = Complex64::new(z.re * z.re, 0.0);
        }
        self.forward(out);
        for (o, gk) in out.iter_mut().zip(g) {
            *o *= gk;
        }
    }
}

/// Advances one ETDRK4 step in place.
fn etdrk4_step(sp: &Spectral, c: &Etdrk4, g: &[Complex64], v: &mut [Complex64], scratch: &mut [Vec<Complex64>; 6]) {
    let n = v.len();
    let [nv, a, na, b, nb, nc] = scratch;
    sp.nonlinear(v, g, nv);
    for k in 0..n {
        a[k] = v[k] * c.e2[k] + nv[k] * c.q[k];
    }
    sp.nonlinear(a, g, na);
    for k in 0..n {
        b[k] = v[k] * c.e2[k] + na[k] * c.q[k];
    }
    sp.nonlinear(b, g, nb);
    // reuse b for c = E2 a + Q (2 Nb - Nv)
    for k in 0..n {
        b[k] = a[k] * c.e2[k] + (nb[k] * 2.0 - nv[k]) * c.q[k];
    }
    sp.nonlinear(b, g, nc);
    for k in 0..n {
        v[k] = v[k] * c.e[k] + nv[k] * c.f1[k] + (na[k] + nb[k]) * (2.0 * c.f2[k]) + nc[k] * c.f3[k];
    }
}

/// Solves to `t_end` with fixed step `dt`.
pub fn kse_etdrk4(config: &KseConfig) -> Result<KseSolution> {
    let steps = config.steps()?;
    let n = config.grid_size;
    let x = config.grid();
    let sp = Spectral::new(n);
    let mut v: Vec<Complex64> = x
        .iter()
        .map(|&xi| Complex64::new(config.initial.eval(xi, config.length_scale), 0.0))
        .collect();
    sp.forward(&mut v);
    let coeffs = Etdrk4::new(&config.linear_symbol(), config.dt);
    let g: Vec<Complex64> = config
        .wavenumbers()
        .iter()
        .map(|&k| if config.nonlinear { Complex64::new(0.0, -0.5 * k) } else { Complex64::new(0.0, 0.0) })
        .collect();
    let mut scratch: [Vec<Complex64>; 6] = std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); n]);
    for step in 1..=steps {
        etdrk4_step(&sp, &coeffs, &g, &mut v, &mut scratch);
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(BbpnError::BlowUp { step });
        }
    }
    sp.inverse(&mut v);
    let u: Vec<f64> = v.iter().map(|z| z.re).collect();
    let scale = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let imag = v.iter().fold(0.0f64, |a, z| a.max(z.im.abs()));
    Ok(KseSolution {
        x,
        u,
        imaginary_ratio: if scale > 0.0 { imag / scale } else { imag },
    })
}

/// Solution at `t_end` on every `stride`-th grid point, with `h` the time step.
#[derive(Debug)]
pub struct KseAdapter {
    pub config: KseConfig,
    pub reference_dt: f64,
    pub stride: usize,
    reference: OnceLock<std::result::Result<Vec<f64>, String>>,
}

impl KseAdapter {
    pub fn new(config: KseConfig, reference_dt: f64, stride: usize) -> Result<Self> {
        if stride == 0 || config.grid_size % stride != 0 {
            return Err(BbpnError::invalid("output stride must divide the grid size"));
        }
        Ok(Self {
            config,
            reference_dt,
            stride,
            reference: OnceLock::new(),
        })
    }

    fn with_dt(&self, dt: f64) -> KseConfig {
        KseConfig { dt, ..self.config.clone() }
    }

    /// Fine-step solution used as the truth proxy.
    pub fn reference(&self) -> Result<Vec<f64>> {
        self.reference
            .get_or_init(|| {
                kse_etdrk4(&self.with_dt(self.reference_dt))
                    .map(|s| s.u)
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(BbpnError::Numeric)
    }

    fn index_of(&self, t: &Ordinate) -> Option<usize> {
        let x = t.block(0)[0];
        let j = (x / self.config.dx()).round();
        (j >= 0.0 && (j as usize) < self.config.grid_size).then_some(j as usize)
    }
}

impl ProblemAdapter for KseAdapter {
    fn name(&self) -> &str {
        "kse"
    }

    fn run(&self, h: f64) -> Result<Vec<(Ordinate, f64)>> {
        let sol = kse_etdrk4(&self.with_dt(h))?;
        Ok(sol
            .x
            .iter()
            .zip(&sol.u)
            .step_by(self.stride)
            .map(|(&x, &u)| (Ordinate::scalars(&[x]), u))
            .collect())
    }

    fn order_hint(&self) -> Option<f64> {
        Some(4.0)
    }

    fn p(&self) -> usize {
        1
    }

    fn query(&self) -> Vec<Ordinate> {
        self.config
            .grid()
            .into_iter()
            .step_by(self.stride)
            .map(|x| Ordinate::scalars(&[x]))
            .collect()
    }

    fn truth(&self, t: &Ordinate) -> Result<Option<f64>> {
        let r = self.reference()?;
        Ok(self.index_of(t).map(|j| r[j]))
    }
}
