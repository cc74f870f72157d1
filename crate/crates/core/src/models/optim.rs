//! Box-constrained quasi-Newton minimiser (projected BFGS with Armijo
//! backtracking), used for GP hyperparameter optimisation in log space.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub f_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-6,
            f_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

fn active_set(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| (xi <= lo && gi > 0.0) || (xi >= hi && gi < 0.0))
        .collect()
}

/// Minimise `f` within `[lower, upper]`. `f` returns `None` where the
/// objective is undefined; the line search backs off from such points.
pub fn minimize_box<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: BfgsOptions,
) -> Result<BfgsResult, String>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let (mut fx, mut g) = f(&x).ok_or_else(|| "objective undefined at starting point".to_string())?;
    if !fx.is_finite() {
        return Err("objective not finite at starting point".into());
    }
    let mut h = identity(n);
    let mut stalled = 0;

    for iter in 0..opts.max_iter {
        let active = active_set(&x, &g, lower, upper);
        let pg_norm = g
            .iter()
            .zip(&active)
            .map(|(gi, &a)| if a { 0.0 } else { gi.abs() })
            .fold(0.0, f64::max);
        if pg_norm < opts.grad_tol {
            return Ok(BfgsResult {
                x,
                f: fx,
                iterations: iter,
                converged: true,
            });
        }

        let mut d = direction(&h, &g, &active);
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            h = identity(n);
            d = g
                .iter()
                .zip(&active)
                .map(|(gi, &a)| if a { 0.0 } else { -gi })
                .collect();
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        }
        let mut t = if iter == 0 {
            (1.0 / pg_norm).min(1.0)
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..50 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            project(&mut xn, lower, upper);
            let decrease: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            if let Some((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ <= fx + 1e-4 * decrease.min(0.0) {
                    accepted = Some((xn, fn_, gn));
                    break;
                }
            }
            t *= 0.5;
        }
        let _ = slope;
        let Some((xn, fn_, gn)) = accepted else {
            // line search exhausted: treat as converged at the current point
            return Ok(BfgsResult {
                x,
                f: fx,
                iterations: iter,
                converged: pg_norm < opts.grad_tol.sqrt(),
            });
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-10 {
            bfgs_update(&mut h, &s, &y, sy);
        }

        let rel = (fx - fn_).abs() / (1.0 + fx.abs());
        x = xn;
        fx = fn_;
        g = gn;
        if rel < opts.f_tol {
            stalled += 1;
            if stalled >= 3 {
                return Ok(BfgsResult {
                    x,
                    f: fx,
                    iterations: iter + 1,
                    converged: true,
                });
            }
        } else {
            stalled = 0;
        }
    }
    Ok(BfgsResult {
        x,
        f: fx,
        iterations: opts.max_iter,
        converged: false,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn direction(h: &[Vec<f64>], g: &[f64], active: &[bool]) -> Vec<f64> {
    (0..g.len())
        .map(|i| {
            if active[i] {
                0.0
            } else {
                -(0..g.len())
                    .filter(|&j| !active[j])
                    .map(|j| h[i][j] * g[j])
                    .sum::<f64>()
            }
        })
        .collect()
}

fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
