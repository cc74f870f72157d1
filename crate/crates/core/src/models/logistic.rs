//! Logistic regression on RBF features with a Gaussian weight prior,
//! approximated by a Laplace posterior found with damped Newton iterations.
//! Optionally augmented with comparative observations about which arm has
//! the better expected outcome at a unit.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::basis::BasisConfig;
use crate::data::{Action, Dataset};
use crate::error::{invalid, FitError, Result};
use crate::reliability::DecisionOrientation;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(z))` without overflow.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightLaplacePosterior {
    pub map_mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// A comparison bit for the unit at `unit_index`: `c = true` means arm 1 is
/// the better arm under the session orientation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparativeAnswer {
    pub unit_index: usize,
    pub c: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-8,
        }
    }
}

/// Likelihood of a comparison: `P(c = 1) = sigmoid(sign * (theta_1 - theta_0) / noise_scale)`
/// where `sign` is +1 when higher outcomes are better and -1 otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonLikelihood {
    pub noise_scale: f64,
    pub orientation: DecisionOrientation,
}

impl ComparisonLikelihood {
    pub const DEFAULT_NOISE_SCALE: f64 = 0.1;

    fn sign(&self) -> f64 {
        self.orientation.sign()
    }

    /// Probability of `c = 1` for arm-wise success probabilities.
    pub fn prob_one(&self, theta1: f64, theta0: f64) -> f64 {
        sigmoid(self.sign() * (theta1 - theta0) / self.noise_scale)
    }
}

struct Objective<'a> {
    basis: &'a BasisConfig,
    rows: &'a [(Vec<f64>, Action, f64)],
    comps: &'a [(Vec<f64>, bool)],
    prior_variance: f64,
    cmp: Option<ComparisonLikelihood>,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    neg_hess: DMatrix<f64>,
}

impl Objective<'_> {
    fn dim(&self) -> usize {
        self.basis.n_features()
    }

    fn value(&self, w: &DVector<f64>) -> f64 {
        let mut v = -0.5 * w.norm_squared() / self.prior_variance;
        for (x, a, y) in self.rows {
            let eta = DVector::from_vec(self.basis.features(x, *a)).dot(w);
            v += y * log_sigmoid(eta) + (1.0 - y) * log_sigmoid(-eta);
        }
        if let Some(cmp) = self.cmp {
            for (x, c) in self.comps {
                let t1 = sigmoid(DVector::from_vec(self.basis.features(x, Action::Treated)).dot(w));
                let t0 = sigmoid(DVector::from_vec(self.basis.features(x, Action::Control)).dot(w));
                let z = cmp.sign() * (t1 - t0) / cmp.noise_scale;
                v += if *c { log_sigmoid(z) } else { log_sigmoid(-z) };
            }
        }
        v
    }

    fn eval(&self, w: &DVector<f64>) -> Eval {
        let p = self.dim();
        let mut grad = -w / self.prior_variance;
        let mut h = DMatrix::<f64>::identity(p, p) / self.prior_variance;
        let mut value = -0.5 * w.norm_squared() / self.prior_variance;
        for (x, a, y) in self.rows {
            let phi = DVector::from_vec(self.basis.features(x, *a));
            let eta = phi.dot(w);
            let mu = sigmoid(eta);
            value += y * log_sigmoid(eta) + (1.0 - y) * log_sigmoid(-eta);
            grad += &phi * (y - mu);
            h += &phi * phi.transpose() * (mu * (1.0 - mu));
        }
        if let Some(cmp) = self.cmp {
            let s = cmp.sign();
            let ns = cmp.noise_scale;
            for (x, c) in self.comps {
                let p1 = DVector::from_vec(self.basis.features(x, Action::Treated));
                let p0 = DVector::from_vec(self.basis.features(x, Action::Control));
                let t1 = sigmoid(p1.dot(w));
                let t0 = sigmoid(p0.dot(w));
                let g = s * (t1 - t0);
                let dg = (&p1 * (t1 * (1.0 - t1)) - &p0 * (t0 * (1.0 - t0))) * s;
                let d2g = (&p1 * p1.transpose() * (t1 * (1.0 - t1) * (1.0 - 2.0 * t1))
                    - &p0 * p0.transpose() * (t0 * (1.0 - t0) * (1.0 - 2.0 * t0)))
                    * s;
                let z = g / ns;
                let cv = if *c { 1.0 } else { 0.0 };
                value += if *c { log_sigmoid(z) } else { log_sigmoid(-z) };
                let sz = sigmoid(z);
                let dl = (cv - sz) / ns;
                let d2l = -sz * (1.0 - sz) / (ns * ns);
                grad += &dg * dl;
                // neg Hessian of the log-likelihood term
                h -= &dg * dg.transpose() * d2l + d2g * dl;
            }
        }
        Eval {
            value,
            grad,
            neg_hess: (&h + h.transpose()) * 0.5,
        }
    }
}

fn newton(obj: &Objective, init: DVector<f64>, opts: &LaplaceOptions) -> std::result::Result<WeightLaplacePosterior, FitError> {
    let p = obj.dim();
    let mut w = init;
    let mut ev = obj.eval(&w);
    let mut iterations = 0;
    loop {
        let gnorm = ev.grad.amax();
        if gnorm < opts.grad_tol {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(FitError::NewtonNotConverged {
                iterations,
                grad_norm: gnorm,
            });
        }
        iterations += 1;

        // Levenberg damping when the negative Hessian is not positive definite
        let mut lambda = 0.0;
        let step = loop {
            let a = &ev.neg_hess + DMatrix::<f64>::identity(p, p) * lambda;
            if let Some(c) = a.cholesky() {
                break c.solve(&ev.grad);
            }
            lambda = if lambda == 0.0 { 1e-8 } else { lambda * 10.0 };
            if lambda > 1e12 {
                return Err(FitError::IndefiniteHessian);
            }
        };

        let slope = step.dot(&ev.grad);
        // Newton decrement below the objective's rounding level: the line
        // search cannot see progress, so judge full steps by the gradient.
        if slope < 1e-15 * (1.0 + ev.value.abs()) && gnorm < 1e-6 {
            let full = &w + &step;
            let next = obj.eval(&full);
            if next.grad.amax() < gnorm {
                w = full;
                ev = next;
                continue;
            }
            break;
        }
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let cand = &w + &step * t;
            let v = obj.value(&cand);
            if v.is_finite() && v >= ev.value + 1e-4 * t * slope {
                next = Some(cand);
                break;
            }
            t *= 0.5;
        }
        // near the mode rounding can defeat the sufficient-increase test
        let cand = match next {
            Some(c) => c,
            None => {
                let full = &w + &step;
                if obj.value(&full) >= ev.value - 1e-12 * (1.0 + ev.value.abs()) {
                    full
                } else {
                    return Err(FitError::NewtonNotConverged {
                        iterations,
                        grad_norm: gnorm,
                    });
                }
            }
        };
        w = cand;
        ev = obj.eval(&w);
    }
    let chol = ev.neg_hess.clone().cholesky().ok_or(FitError::IndefiniteHessian)?;
    let cov = chol.inverse();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(WeightLaplacePosterior {
        map_mean: w.iter().copied().collect(),
        covariance: (0..p).map(|i| cov.row(i).iter().copied().collect()).collect(),
    })
}

/// Fitted Laplace logistic model. Holds its training rows so it can be
/// refit cheaply (warm-started) with additional observations.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    basis: BasisConfig,
    prior_variance: f64,
    opts: LaplaceOptions,
    rows: Vec<(Vec<f64>, Action, f64)>,
    comps: Vec<(Vec<f64>, bool)>,
    cmp: Option<ComparisonLikelihood>,
    post: WeightLaplacePosterior,
}

impl LogisticModel {
    fn fit_inner(
        basis: BasisConfig,
        prior_variance: f64,
        opts: LaplaceOptions,
        rows: Vec<(Vec<f64>, Action, f64)>,
        comps: Vec<(Vec<f64>, bool)>,
        cmp: Option<ComparisonLikelihood>,
        init: Option<&[f64]>,
    ) -> Result<Self> {
        basis.validate()?;
        if !(prior_variance > 0.0) {
            return Err(invalid("prior variance must be positive"));
        }
        if let Some(c) = &cmp {
            if !(c.noise_scale > 0.0) {
                return Err(invalid("comparison noise scale must be positive"));
            }
        }
        let p = basis.n_features();
        let obj = Objective {
            basis: &basis,
            rows: &rows,
            comps: &comps,
            prior_variance,
            cmp,
        };
        let start = match init {
            Some(w) => DVector::from_column_slice(w),
            None => DVector::zeros(p),
        };
        let post = newton(&obj, start, &opts)?;
        Ok(Self {
            basis,
            prior_variance,
            opts,
            rows,
            comps,
            cmp,
            post,
        })
    }

    pub fn fit(data: &Dataset, basis: &BasisConfig, prior_variance: f64) -> Result<Self> {
        Self::fit_with_comparisons(data, &[], basis, prior_variance, None)
    }

    pub fn fit_with_comparisons(
        data: &Dataset,
        comparisons: &[ComparativeAnswer],
        basis: &BasisConfig,
        prior_variance: f64,
        cmp: Option<ComparisonLikelihood>,
    ) -> Result<Self> {
        data.validate_binary()?;
        let rows = (0..data.len())
            .map(|i| (data.units()[i].clone(), data.actions()[i], data.outcomes()[i]))
            .collect();
        let mut comps = Vec::with_capacity(comparisons.len());
        for c in comparisons {
            if c.unit_index >= data.len() {
                return Err(invalid(format!(
                    "comparison unit index {} out of range for {} rows",
                    c.unit_index,
                    data.len()
                )));
            }
            comps.push((data.units()[c.unit_index].clone(), c.c));
        }
        let cmp = if comps.is_empty() {
            cmp
        } else {
            Some(cmp.unwrap_or(ComparisonLikelihood {
                noise_scale: ComparisonLikelihood::DEFAULT_NOISE_SCALE,
                orientation: DecisionOrientation::HigherIsBetter,
            }))
        };
        Self::fit_inner(basis.clone(), prior_variance, LaplaceOptions::default(), rows, comps, cmp, None)
    }

    pub fn posterior(&self) -> &WeightLaplacePosterior {
        &self.post
    }

    pub fn basis(&self) -> &BasisConfig {
        &self.basis
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn comparison_likelihood(&self) -> Option<ComparisonLikelihood> {
        self.cmp
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_comparisons(&self) -> usize {
        self.comps.len()
    }

    /// Refit with one more direct observation, warm-started at the current mode.
    pub fn with_row(&self, x: Vec<f64>, action: Action, y: f64) -> Result<Self> {
        let mut rows = self.rows.clone();
        rows.push((x, action, y));
        Self::fit_inner(
            self.basis.clone(),
            self.prior_variance,
            self.opts,
            rows,
            self.comps.clone(),
            self.cmp,
            Some(&self.post.map_mean),
        )
    }

    /// Refit with one more comparison, warm-started at the current mode.
    pub fn with_comparison(&self, x: Vec<f64>, c: bool, cmp: ComparisonLikelihood) -> Result<Self> {
        let mut comps = self.comps.clone();
        comps.push((x, c));
        Self::fit_inner(
            self.basis.clone(),
            self.prior_variance,
            self.opts,
            self.rows.clone(),
            comps,
            Some(self.cmp.unwrap_or(cmp)),
            Some(&self.post.map_mean),
        )
    }

    /// Gradient of the log posterior at `w` (for stationarity checks).
    pub fn log_posterior_gradient(&self, w: &[f64]) -> Vec<f64> {
        let obj = Objective {
            basis: &self.basis,
            rows: &self.rows,
            comps: &self.comps,
            prior_variance: self.prior_variance,
            cmp: self.cmp,
        };
        obj.eval(&DVector::from_column_slice(w)).grad.iter().copied().collect()
    }

    pub fn log_posterior(&self, w: &[f64]) -> f64 {
        let obj = Objective {
            basis: &self.basis,
            rows: &self.rows,
            comps: &self.comps,
            prior_variance: self.prior_variance,
            cmp: self.cmp,
        };
        obj.value(&DVector::from_column_slice(w))
    }

    /// Joint Gaussian of the latent logits `(eta_0, eta_1)` at `x`.
    pub fn latent_joint(&self, x: &[f64]) -> LatentPair {
        latent_joint(&self.post, &self.basis, x)
    }

    /// Paired draws of `(theta_0, theta_1)` at `x`. Identical seeds give
    /// identical standard-normal streams, so draws are common random numbers
    /// across models.
    pub fn theta_pair_draws(&self, x: &[f64], n_draws: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        self.latent_joint(x).theta_draws(n_draws, seed)
    }

    /// Posterior mean of `theta` at `(x, a)` estimated from `n_draws` draws.
    pub fn mean_theta(&self, x: &[f64], action: Action, n_draws: usize, seed: u64) -> f64 {
        let (t0, t1) = self.theta_pair_draws(x, n_draws, seed);
        let d = if action == Action::Treated { t1 } else { t0 };
        d.iter().sum::<f64>() / d.len() as f64
    }
}

/// Bivariate Gaussian over the per-arm latent logits at one unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentPair {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl LatentPair {
    fn factor(&self) -> [[f64; 2]; 2] {
        let l00 = self.cov[0][0].max(0.0).sqrt();
        let l10 = if l00 > 0.0 { self.cov[1][0] / l00 } else { 0.0 };
        let l11 = (self.cov[1][1] - l10 * l10).max(0.0).sqrt();
        [[l00, 0.0], [l10, l11]]
    }

    pub fn theta_draws(&self, n_draws: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let l = self.factor();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t0 = Vec::with_capacity(n_draws);
        let mut t1 = Vec::with_capacity(n_draws);
        for _ in 0..n_draws {
            let z0: f64 = StandardNormal.sample(&mut rng);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let e0 = self.mean[0] + l[0][0] * z0;
            let e1 = self.mean[1] + l[1][0] * z0 + l[1][1] * z1;
            t0.push(sigmoid(e0));
            t1.push(sigmoid(e1));
        }
        (t0, t1)
    }
}

pub fn latent_joint(post: &WeightLaplacePosterior, basis: &BasisConfig, x: &[f64]) -> LatentPair {
    let p = post.map_mean.len();
    let m = DVector::from_column_slice(&post.map_mean);
    let s = DMatrix::from_fn(p, p, |i, j| post.covariance[i][j]);
    let f0 = DVector::from_vec(basis.features(x, Action::Control));
    let f1 = DVector::from_vec(basis.features(x, Action::Treated));
    let s0 = &s * &f0;
    let s1 = &s * &f1;
    LatentPair {
        mean: [f0.dot(&m), f1.dot(&m)],
        cov: [[f0.dot(&s0), f0.dot(&s1)], [f1.dot(&s0), f1.dot(&s1)]],
    }
}

pub fn logistic_rbf_fit(data: &Dataset, basis: &BasisConfig, prior_variance: f64) -> Result<WeightLaplacePosterior> {
    Ok(LogisticModel::fit(data, basis, prior_variance)?.post)
}

/// Draws of `theta_{x,a}` obtained by sampling weights from the Laplace
/// Gaussian and pushing them through the logistic link.
pub fn logistic_theta_draws(
    post: &WeightLaplacePosterior,
    basis: &BasisConfig,
    x: &[f64],
    action: Action,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_draws == 0 {
        return Err(invalid("n_draws must be at least 1"));
    }
    let p = post.map_mean.len();
    let s = DMatrix::from_fn(p, p, |i, j| post.covariance[i][j]);
    let l = match s.clone().cholesky() {
        Some(c) => c.l(),
        // degenerate posterior: point mass at the mode
        None => DMatrix::zeros(p, p),
    };
    let m = DVector::from_column_slice(&post.map_mean);
    let phi = DVector::from_vec(basis.features(x, action));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_draws)
        .map(|_| {
            let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut rng)));
            let w = &m + &l * z;
            sigmoid(phi.dot(&w))
        })
        .collect())
}

pub fn comparative_augmented_fit(
    data: &Dataset,
    comparisons: &[ComparativeAnswer],
    basis: &BasisConfig,
    prior_variance: f64,
    noise_scale: f64,
    orientation: DecisionOrientation,
) -> Result<WeightLaplacePosterior> {
    let cmp = ComparisonLikelihood {
        noise_scale,
        orientation,
    };
    Ok(LogisticModel::fit_with_comparisons(data, comparisons, basis, prior_variance, Some(cmp))?.post)
}
