//! Box-constrained quasi-Newton minimisation (projected BFGS with Armijo backtracking).

#[derive(Clone, Copy, Debug)]
pub(crate) struct BfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn projected_gradient(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let at_lo = x[i] <= lo[i] && g[i] > 0.0;
            let at_hi = x[i] >= hi[i] && g[i] < 0.0;
            if at_lo || at_hi {
                0.0
            } else {
                g[i]
            }
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f` over the box `[lo, hi]`. `eval` returns `None` where the
/// objective is undefined; the line search treats such points as infeasible.
pub(crate) fn minimize<F>(mut eval: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: BfgsOptions) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut f, mut g) = eval(&x)?;
    let identity = |n: usize| {
        let mut h = vec![vec![0.0; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        h
    };
    let mut hinv = identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut pg = projected_gradient(&x, &g, lo, hi);
    while iterations < opts.max_iters {
        if norm(&pg) < opts.grad_tol {
            return Some(Minimum {
                projected_gradient_norm: norm(&pg),
                x,
                f,
                iterations,
                converged: true,
            });
        }
        iterations += 1;
        let active: Vec<bool> = (0..n).map(|i| pg[i] == 0.0 && g[i] != 0.0).collect();
        let mut d = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                continue;
            }
            d[i] = -(0..n).filter(|&j| !active[j]).map(|j| hinv[i][j] * g[j]).sum::<f64>();
        }
        if dot(&d, &g) >= 0.0 {
            hinv = identity(n);
            fresh = true;
            d = pg.iter().map(|v| -v).collect();
        }
        let dmax = d.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut step = if dmax > 2.0 { 2.0 / dmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..50 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut xn, lo, hi);
            let dx: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if norm(&dx) == 0.0 {
                break;
            }
            if let Some((fn_, gn)) = eval(&xn) {
                if fn_.is_finite() && fn_ <= f + 1e-4 * dot(&g, &dx) {
                    accepted = Some((xn, fn_, gn, dx));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            if fresh {
                break;
            }
            hinv = identity(n);
            fresh = true;
            continue;
        };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if fresh {
                // scale the initial inverse Hessian before the first update
                let scale = sy / dot(&y, &y);
                for (i, row) in hinv.iter_mut().enumerate() {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[i] = scale;
                }
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&hinv[i], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
        x = xn;
        f = fn_;
        g = gn;
        pg = projected_gradient(&x, &g, lo, hi);
    }
    let pgn = norm(&pg);
    Some(Minimum {
        x,
        f,
        projected_gradient_norm: pgn,
        iterations,
        converged: pgn < opts.grad_tol,
    })
}
