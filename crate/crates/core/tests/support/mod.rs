//! Reference implementations used as test oracles. Deliberately naive and
//! independent of the library's numerics.
#![allow(dead_code)]

use std::f64::consts::{PI, SQRT_2};

/// erf by its Maclaurin series; accurate to ~1e-13 for |x| <= 3.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    let mut n = 0.0;
    while term.abs() > 1e-17 * sum.abs().max(1e-300) {
        n += 1.0;
        term *= -x2 / n;
        sum += term / (2.0 * n + 1.0);
    }
    2.0 / PI.sqrt() * sum
}

/// erfc by Lentz's continued fraction; for x > 3.
fn erfc_cf(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

pub fn normal_cdf(z: f64) -> f64 {
    let x = z / SQRT_2;
    if x.abs() <= 3.0 {
        0.5 * (1.0 + erf_series(x))
    } else if x > 0.0 {
        1.0 - 0.5 * erfc_cf(x)
    } else {
        0.5 * erfc_cf(-x)
    }
}

/// E[X^k] for X ~ N(m, s^2).
pub fn gaussian_moment(m: f64, s: f64, k: u32) -> f64 {
    let mut total = 0.0;
    for j in 0..=k / 2 {
        let binom = (0..2 * j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64);
        let double_fact = (1..2 * j).step_by(2).fold(1.0, |acc, i| acc * i as f64);
        total += binom * m.powi((k - 2 * j) as i32) * s.powi(2 * j as i32) * double_fact;
    }
    total
}

pub type Mat = Vec<Vec<f64>>;

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for (l, brow) in b.iter().enumerate().take(k) {
            let ail = a[i][l];
            for j in 0..m {
                out[i][j] += ail * brow[j];
            }
        }
    }
    out
}

pub fn transpose(a: &Mat) -> Mat {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn mat_vec(a: &Mat, v: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Mat) -> Mat {
    let n = a.len();
    let mut m: Mat = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| f64::from(u8::from(i == j))));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Lower Cholesky factor by the textbook triple loop.
pub fn cholesky(a: &Mat) -> Mat {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                assert!(d > 0.0, "matrix not positive definite");
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Solve `L L^T x = b`.
pub fn cholesky_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut z = vec![0.0; n];
    for i in 0..n {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (z[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

/// `sf2 * exp(-0.5 * sum(((x - y) / l)^2))`.
pub fn se_kernel(x: &[f64], y: &[f64], lengthscales: &[f64], sf2: f64) -> f64 {
    let d: f64 = x
        .iter()
        .zip(y)
        .zip(lengthscales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    sf2 * (-0.5 * d).exp()
}

/// Squared V-statistic MMD as one signed double sum over the pooled sample.
pub fn mmd_squared(a: &[Vec<f64>], b: &[Vec<f64>], lengthscale: f64) -> f64 {
    let pooled: Vec<(&Vec<f64>, f64)> = a
        .iter()
        .map(|x| (x, 1.0 / a.len() as f64))
        .chain(b.iter().map(|x| (x, -1.0 / b.len() as f64)))
        .collect();
    let mut s = 0.0;
    for (x, wx) in &pooled {
        for (y, wy) in &pooled {
            let sq: f64 = x.iter().zip(y.iter()).map(|(u, v)| (u - v).powi(2)).sum();
            s += wx * wy * (-sq / (2.0 * lengthscale * lengthscale)).exp();
        }
    }
    s
}

pub mod checks {
    //! Oracle comparisons shared by the property tests and the acceptance run.

    use dmaware_core::active_learning::{gauss_hermite_expect, QuadratureRule};
    use dmaware_core::models::{blr_fit, blr_predict, BasisConfig, BlrConfig, GaussianPredictive, GpHyperparams, GpModel};
    use dmaware_core::reliability::{estimate_type_s_gaussian, DecisionOrientation};
    use dmaware_core::{Action, Dataset, Row, Source};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Largest |gamma_hat - Phi(-|m|/sd)| over a 40 x 25 grid of
    /// (mean, variance), and whether every zero-mean case gives exactly 0.5.
    pub fn type_s_grid() -> (f64, bool) {
        let mut worst = 0.0f64;
        let mut zero_exact = true;
        for i in 0..40 {
            let m = -5.0 + 10.0 * i as f64 / 39.0;
            for j in 0..25 {
                let v = 10f64.powf(-3.0 + 5.0 * j as f64 / 24.0);
                let est = estimate_type_s_gaussian(&GaussianPredictive::new(m, v), DecisionOrientation::HigherIsBetter)
                    .expect("positive variance");
                let reference = normal_cdf(-m.abs() / v.sqrt()).min(0.5);
                worst = worst.max((est.gamma_hat - reference).abs());
            }
        }
        for v in [1e-6, 0.3, 1.0, 7.0, 1e4] {
            let est = estimate_type_s_gaussian(&GaussianPredictive::new(0.0, v), DecisionOrientation::LowerIsBetter)
                .expect("positive variance");
            zero_exact &= est.gamma_hat == 0.5;
        }
        (worst, zero_exact)
    }

    fn features(x: &[f64], a: Action, centers: &[Vec<f64>], l: f64, interaction: bool) -> Vec<f64> {
        let rbf: Vec<f64> = centers
            .iter()
            .map(|c| {
                let sq: f64 = c.iter().zip(x).map(|(ci, xi)| (xi - ci).powi(2)).sum();
                (-sq / (2.0 * l * l)).exp()
            })
            .collect();
        if !interaction {
            return rbf;
        }
        let ai = if a == Action::Treated { 1.0 } else { 0.0 };
        rbf.iter().copied().chain(rbf.iter().map(|v| v * ai)).collect()
    }

    /// Max deviation of BLR posterior moments (weight space, dense inverse)
    /// and predictives (function space) over random instances.
    pub fn blr_max_error(instances: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let dim = rng.random_range(1..=3);
            let n_centers = rng.random_range(1..=5);
            let interaction = rng.random_bool(0.5);
            let centers: Vec<Vec<f64>> = (0..n_centers)
                .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let l = rng.random_range(0.5..2.0);
            let alpha = rng.random_range(0.2..5.0);
            let noise = rng.random_range(0.05..1.0);
            let n = rng.random_range(0..=50);
            let mut data = Dataset::empty();
            for _ in 0..n {
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
                let action = Action::from_bit(rng.random_bool(0.5));
                let y = rng.random_range(-2.0..2.0);
                data.push(Row { x, action, y, source: Source::Factual }).expect("consistent rows");
            }
            let basis = BasisConfig::new(centers.clone(), l, interaction).expect("valid basis");
            let cfg = BlrConfig { prior_variance: alpha, noise_variance: noise };
            for action in Action::BOTH {
                let post = blr_fit(&data, action, &basis, &cfg).expect("fit");
                let idx = data.indices_for(action);
                let phi: Mat = idx
                    .iter()
                    .map(|&i| features(&data.units()[i], action, &centers, l, interaction))
                    .collect();
                let y: Vec<f64> = idx.iter().map(|&i| data.outcomes()[i]).collect();
                let p = basis.n_features();
                let mut precision: Mat = (0..p)
                    .map(|i| (0..p).map(|j| if i == j { alpha } else { 0.0 }).collect())
                    .collect();
                if !phi.is_empty() {
                    let ptp = mat_mul(&transpose(&phi), &phi);
                    for i in 0..p {
                        for j in 0..p {
                            precision[i][j] += ptp[i][j] / noise;
                        }
                    }
                }
                let cov = inverse(&precision);
                let pty: Vec<f64> = (0..p).map(|j| phi.iter().zip(&y).map(|(r, yi)| r[j] * yi).sum::<f64>() / noise).collect();
                let mean = mat_vec(&cov, &pty);
                for j in 0..p {
                    worst = worst.max((post.mean[j] - mean[j]).abs());
                    for k in 0..p {
                        worst = worst.max((post.covariance[j][k] - cov[j][k]).abs());
                    }
                }
                for _ in 0..3 {
                    let xs: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
                    let f = features(&xs, action, &centers, l, interaction);
                    // function space: K = Phi Phi^T / alpha + noise I
                    let (m_ref, v_ref) = if phi.is_empty() {
                        (0.0, dot(&f, &f) / alpha + noise)
                    } else {
                        let mut k = mat_mul(&phi, &transpose(&phi));
                        for (i, row) in k.iter_mut().enumerate() {
                            for v in row.iter_mut() {
                                *v /= alpha;
                            }
                            row[i] += noise;
                        }
                        let kinv = inverse(&k);
                        let kstar: Vec<f64> = phi.iter().map(|r| dot(r, &f) / alpha).collect();
                        let w = mat_vec(&kinv, &kstar);
                        (dot(&w, &y), dot(&f, &f) / alpha - dot(&kstar, &w) + noise)
                    };
                    let pred = blr_predict(&post, &basis, &cfg, &xs, action);
                    worst = worst.max((pred.mean - m_ref).abs()).max((pred.variance - v_ref).abs());
                }
            }
        }
        worst
    }

    /// Max deviation of exact-GP predictives from a textbook Cholesky solve.
    pub fn gp_max_error(instances: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let dim = rng.random_range(1..=3);
            let n = rng.random_range(1..=100);
            let hp = GpHyperparams {
                lengthscales: (0..dim).map(|_| rng.random_range(0.3..2.0)).collect(),
                signal_variance: rng.random_range(0.2..2.0),
                noise_factual: rng.random_range(0.01..0.5),
                noise_elicited: rng.random_range(0.01..0.5),
            };
            let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s: Vec<Source> = (0..n)
                .map(|_| if rng.random_bool(0.3) { Source::Elicited } else { Source::Factual })
                .collect();
            let model = GpModel::condition(x.clone(), y.clone(), s.clone(), hp.clone()).expect("condition");
            let mut k: Mat = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    k[i][j] = se_kernel(&x[i], &x[j], &hp.lengthscales, hp.signal_variance);
                }
                k[i][i] += if s[i] == Source::Factual { hp.noise_factual } else { hp.noise_elicited };
            }
            let l = cholesky(&k);
            let alpha = cholesky_solve(&l, &y);
            for _ in 0..3 {
                let xs: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.5..3.5)).collect();
                let kstar: Vec<f64> = x.iter().map(|xi| se_kernel(xi, &xs, &hp.lengthscales, hp.signal_variance)).collect();
                let m_ref = dot(&kstar, &alpha);
                let v_ref = hp.signal_variance - dot(&kstar, &cholesky_solve(&l, &kstar)) + hp.noise_factual;
                let p = model.predict(&xs).expect("predict");
                worst = worst.max((p.mean - m_ref).abs()).max((p.variance - v_ref).abs());
            }
        }
        worst
    }

    /// Largest relative error of order-32 Gauss-Hermite moments of degree
    /// 0..=max_degree over a grid of (mean, sd).
    pub fn quadrature_moment_error(max_degree: u32) -> f64 {
        let rule = QuadratureRule::gauss_hermite(32).expect("rule");
        let mut worst = 0.0f64;
        for m in [-2.0, -0.3, 0.0, 0.5, 1.7, 3.0] {
            for s in [0.1, 0.7, 1.0, 2.5] {
                let pred = GaussianPredictive::new(m, s * s);
                for k in 0..=max_degree {
                    let q = gauss_hermite_expect(&pred, |x| x.powi(k as i32), &rule);
                    let exact = gaussian_moment(m, s, k);
                    // odd central moments vanish; measure against the scale s^k
                    let scale = exact.abs().max(gaussian_moment(0.0, s, 2 * k).sqrt());
                    worst = worst.max((q - exact).abs() / scale);
                }
            }
        }
        worst
    }

    /// Largest absolute error of E[x] = m and E[x^2] = m^2 + s^2.
    pub fn quadrature_low_moment_error() -> f64 {
        let rule = QuadratureRule::gauss_hermite(32).expect("rule");
        let mut worst = 0.0f64;
        for m in [-3.0, -1.0, 0.0, 0.25, 2.0] {
            for s in [0.05, 0.5, 1.0, 3.0] {
                let pred = GaussianPredictive::new(m, s * s);
                let e1 = gauss_hermite_expect(&pred, |x| x, &rule);
                let e2 = gauss_hermite_expect(&pred, |x| x * x, &rule);
                worst = worst.max((e1 - m).abs()).max((e2 - (m * m + s * s)).abs());
            }
        }
        worst
    }
}
