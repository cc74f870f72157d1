//! Exact Gaussian-process regression for one potential outcome, with
//! MAP-II hyperparameter estimation under Gamma priors and a mixed noise
//! model (separate variances for factual and elicited rows).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::kernel::{kernel_unchecked, scaled_sqdist, GpHyperparams, HyperPrior};
use super::optim::{minimize_box, BfgsOptions};
use super::predictive::GaussianPredictive;
use crate::data::{Action, Dataset, Source};
use crate::error::{Error, FitError, Result};
use crate::linalg::{chol_logdet, cholesky_with_jitter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpFitOptions {
    pub restarts: usize,
    pub lower: f64,
    pub upper: f64,
    pub max_iter: usize,
    /// Pin the elicited-answer noise variance instead of learning it.
    pub fixed_noise_elicited: Option<f64>,
}

impl Default for GpFitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            lower: 1e-3,
            upper: 1e3,
            max_iter: 200,
            fixed_noise_elicited: None,
        }
    }
}

/// Fitted GP posterior for one arm. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GpModel {
    hp: GpHyperparams,
    prior: HyperPrior,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    sources: Vec<Source>,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
    jitter: f64,
}

fn noise_for(hp: &GpHyperparams, s: Source) -> f64 {
    match s {
        Source::Factual => hp.noise_factual,
        Source::Elicited => hp.noise_elicited,
    }
}

fn gram(x: &[Vec<f64>], sources: &[Source], hp: &GpHyperparams) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hp.signal_variance + noise_for(hp, sources[i]);
        for j in 0..i {
            let v = kernel_unchecked(&x[i], &x[j], hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

impl GpModel {
    /// Exact posterior with fixed hyperparameters.
    pub fn condition(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        sources: Vec<Source>,
        hp: GpHyperparams,
    ) -> Result<Self> {
        hp.validate()?;
        let d = hp.dim();
        if let Some(bad) = x.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        if y.len() != x.len() || sources.len() != x.len() {
            return Err(crate::error::invalid("GP inputs have different lengths"));
        }
        let (chol, alpha, jitter) = if x.is_empty() {
            (None, DVector::zeros(0), 0.0)
        } else {
            let k = gram(&x, &sources, &hp);
            let (c, jitter) = cholesky_with_jitter(&k)?;
            let alpha = c.solve(&DVector::from_column_slice(&y));
            (Some(c), alpha, jitter)
        };
        Ok(Self {
            hp,
            prior: HyperPrior::default(),
            x,
            y,
            sources,
            chol,
            alpha,
            jitter,
        })
    }

    /// Exact posterior for the rows of `data` that received `action`.
    pub fn condition_on(data: &Dataset, action: Action, hp: GpHyperparams) -> Result<Self> {
        let (x, y, s) = arm_rows(data, action);
        Self::condition(x, y, s, hp)
    }

    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hp
    }

    pub fn prior(&self) -> HyperPrior {
        self.prior
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.hp.dim()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn kvec(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.x.iter().map(|xi| kernel_unchecked(xi, x, &self.hp)))
    }

    /// Posterior mean and variance of the latent function (no observation noise).
    pub fn latent(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(x)?;
        let prior_var = self.hp.signal_variance;
        let Some(chol) = &self.chol else {
            return Ok((0.0, prior_var));
        };
        let k = self.kvec(x);
        let mean = k.dot(&self.alpha);
        let v = chol.solve(&k);
        let var = (prior_var - k.dot(&v)).max(0.0);
        Ok((mean, var))
    }

    /// Posterior covariance of the latent function between two inputs.
    pub fn latent_cov(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(x2)?;
        let prior = kernel_unchecked(x, x2, &self.hp);
        let Some(chol) = &self.chol else {
            return Ok(prior);
        };
        let k1 = self.kvec(x);
        let k2 = self.kvec(x2);
        Ok(prior - k1.dot(&chol.solve(&k2)))
    }

    /// Predictive of a new factual observation at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<GaussianPredictive> {
        let (m, v) = self.latent(x)?;
        Ok(GaussianPredictive::new(m, v + self.hp.noise_factual))
    }

    /// Predictive of an elicited answer at `x` (uses the elicited noise level).
    pub fn predict_elicited(&self, x: &[f64]) -> Result<GaussianPredictive> {
        let (m, v) = self.latent(x)?;
        Ok(GaussianPredictive::new(m, v + self.hp.noise_elicited))
    }

    /// Refit with one more observation, hyperparameters unchanged.
    pub fn with_observation(&self, x: Vec<f64>, y: f64, source: Source) -> Result<Self> {
        let mut xs = self.x.clone();
        let mut ys = self.y.clone();
        let mut ss = self.sources.clone();
        xs.push(x);
        ys.push(y);
        ss.push(source);
        let mut m = Self::condition(xs, ys, ss, self.hp.clone())?;
        m.prior = self.prior;
        Ok(m)
    }

    /// Squared distance under the fitted ARD length-scales.
    pub fn scaled_sqdist(&self, x: &[f64], x2: &[f64]) -> f64 {
        scaled_sqdist(x, x2, &self.hp.lengthscales)
    }
}

pub(crate) fn arm_rows(data: &Dataset, action: Action) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Source>) {
    let idx = data.indices_for(action);
    (
        idx.iter().map(|&i| data.units()[i].clone()).collect(),
        idx.iter().map(|&i| data.outcomes()[i]).collect(),
        idx.iter().map(|&i| data.sources()[i]).collect(),
    )
}

/// Log marginal likelihood and its gradient with respect to the log-space
/// hyperparameters (see [`GpHyperparams::to_log`]).
pub fn log_marginal_likelihood(
    x: &[Vec<f64>],
    y: &[f64],
    sources: &[Source],
    hp: &GpHyperparams,
) -> std::result::Result<(f64, Vec<f64>), FitError> {
    let n = x.len();
    let d = hp.dim();
    let mut grad = vec![0.0; d + 3];
    if n == 0 {
        return Ok((0.0, grad));
    }
    let k = gram(x, sources, hp);
    let (chol, _) = cholesky_with_jitter(&k)?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let lml = -0.5 * yv.dot(&alpha) - 0.5 * chol_logdet(&chol)
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // W = alpha alpha^T - K^{-1}
    let kinv = chol.inverse();
    let w = &alpha * alpha.transpose() - kinv;

    for i in 0..n {
        for j in 0..=i {
            let mult = if i == j { 0.5 } else { 1.0 };
            let wij = w[(i, j)] * mult;
            let kse = if i == j {
                hp.signal_variance
            } else {
                kernel_unchecked(&x[i], &x[j], hp)
            };
            if i != j {
                for (dd, l) in hp.lengthscales.iter().enumerate() {
                    let diff = (x[i][dd] - x[j][dd]) / l;
                    grad[dd] += wij * kse * diff * diff;
                }
            }
            grad[d] += wij * kse;
            if i == j {
                match sources[i] {
                    Source::Factual => grad[d + 1] += wij * hp.noise_factual,
                    Source::Elicited => grad[d + 2] += wij * hp.noise_elicited,
                }
            }
        }
    }
    Ok((lml, grad))
}

/// MAP-II objective: log marginal likelihood plus Gamma log-priors on every
/// hyperparameter. Returns value and gradient in log space.
pub fn log_posterior_objective(
    x: &[Vec<f64>],
    y: &[f64],
    sources: &[Source],
    hp: &GpHyperparams,
    prior: &HyperPrior,
) -> std::result::Result<(f64, Vec<f64>), FitError> {
    let (mut val, mut grad) = log_marginal_likelihood(x, y, sources, hp)?;
    let values = hp
        .lengthscales
        .iter()
        .chain([&hp.signal_variance, &hp.noise_factual, &hp.noise_elicited]);
    for (g, &h) in grad.iter_mut().zip(values) {
        val += prior.log_density(h);
        *g += prior.dlog_density_dlog(h);
    }
    Ok((val, grad))
}

/// Fit the GP for one arm: MAP-II over hyperparameters with restarts drawn
/// from the Gamma prior, then the exact posterior at the best optimum.
pub fn gp_fit(data: &Dataset, action: Action, prior: &HyperPrior, seed: u64) -> Result<GpModel> {
    gp_fit_with(data, action, prior, seed, &GpFitOptions::default())
}

pub fn gp_fit_with(
    data: &Dataset,
    action: Action,
    prior: &HyperPrior,
    seed: u64,
    opts: &GpFitOptions,
) -> Result<GpModel> {
    prior.validate()?;
    let dim = data
        .dim()
        .ok_or_else(|| crate::error::invalid("cannot infer covariate dimension from an empty dataset"))?;
    let (x, y, s) = arm_rows(data, action);
    fit_rows(x, y, s, dim, prior, seed, opts)
}

pub(crate) fn fit_rows(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    s: Vec<Source>,
    dim: usize,
    prior: &HyperPrior,
    seed: u64,
    opts: &GpFitOptions,
) -> Result<GpModel> {
    let p = dim + 3;
    let mut lower = vec![opts.lower.ln(); p];
    let mut upper = vec![opts.upper.ln(); p];
    if let Some(v) = opts.fixed_noise_elicited {
        if !(v > 0.0 && v.is_finite()) {
            return Err(crate::error::invalid("fixed elicited noise variance must be positive"));
        }
        lower[p - 1] = v.ln();
        upper[p - 1] = v.ln();
    }
    let gamma = Gamma::new(prior.shape, 1.0 / prior.rate)
        .map_err(|e| crate::error::invalid(format!("bad Gamma prior: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_err = String::from("no restarts attempted");
    for _ in 0..opts.restarts.max(1) {
        let x0: Vec<f64> = (0..p)
            .map(|j| gamma.sample(&mut rng).ln().clamp(lower[j], upper[j]))
            .collect();
        let objective = |theta: &[f64]| {
            let hp = GpHyperparams::from_log(theta);
            log_posterior_objective(&x, &y, &s, &hp, prior)
                .ok()
                .map(|(v, g)| (-v, g.into_iter().map(|gi| -gi).collect()))
        };
        let bfgs = BfgsOptions {
            max_iter: opts.max_iter,
            grad_tol: 1e-6,
            f_tol: 1e-12,
        };
        match minimize_box(objective, &x0, &lower, &upper, bfgs) {
            Ok(r) if r.f.is_finite() => {
                if best.as_ref().is_none_or(|(bf, _)| r.f < *bf) {
                    best = Some((r.f, r.x));
                }
            }
            Ok(r) => last_err = format!("non-finite objective {}", r.f),
            Err(e) => last_err = e,
        }
    }
    let (_, theta) = best.ok_or(FitError::AllRestartsFailed {
        restarts: opts.restarts.max(1),
        last: last_err,
    })?;
    let hp = GpHyperparams::from_log(&theta);
    let mut model = GpModel::condition(x, y, s, hp)?;
    model.prior = *prior;
    Ok(model)
}

pub fn gp_predict(model: &GpModel, x: &[f64]) -> Result<GaussianPredictive> {
    model.predict(x)
}
