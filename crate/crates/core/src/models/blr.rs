//! Conjugate Bayesian linear regression on basis features, fitted separately
//! for each arm.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::BasisConfig;
use super::predictive::GaussianPredictive;
use crate::data::{Action, Dataset};
use crate::error::{invalid, Result};

/// `alpha` is the prior precision scale: `S^{-1} = alpha I + Phi^T Phi / sigma0^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlrConfig {
    pub prior_variance: f64,
    pub noise_variance: f64,
}

impl BlrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prior_variance > 0.0 && self.noise_variance > 0.0 {
            Ok(())
        } else {
            Err(invalid("BLR alpha and noise variance must be positive"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightPosterior {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub phi_t_phi: Vec<Vec<f64>>,
    pub phi_t_y: Vec<f64>,
}

impl WeightPosterior {
    pub(crate) fn cov_matrix(&self) -> DMatrix<f64> {
        let p = self.mean.len();
        DMatrix::from_fn(p, p, |i, j| self.covariance[i][j])
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn blr_fit(data: &Dataset, action: Action, basis: &BasisConfig, cfg: &BlrConfig) -> Result<WeightPosterior> {
    basis.validate()?;
    cfg.validate()?;
    let p = basis.n_features();
    let mut ptp = DMatrix::<f64>::zeros(p, p);
    let mut pty = DVector::<f64>::zeros(p);
    for i in data.indices_for(action) {
        let phi = DVector::from_vec(basis.features(&data.units()[i], action));
        ptp += &phi * phi.transpose();
        pty += &phi * data.outcomes()[i];
    }
    posterior_from_matrices(ptp, pty, cfg)
}

fn posterior_from_matrices(ptp: DMatrix<f64>, pty: DVector<f64>, cfg: &BlrConfig) -> Result<WeightPosterior> {
    let p = pty.len();
    let precision = DMatrix::<f64>::identity(p, p) * cfg.prior_variance + &ptp / cfg.noise_variance;
    let chol = precision
        .cholesky()
        .ok_or_else(|| invalid("BLR posterior precision not positive definite"))?;
    let s = chol.inverse();
    let s = (&s + s.transpose()) * 0.5;
    let mean = &s * &pty / cfg.noise_variance;
    Ok(WeightPosterior {
        mean: mean.iter().copied().collect(),
        covariance: to_rows(&s),
        phi_t_phi: to_rows(&ptp),
        phi_t_y: pty.iter().copied().collect(),
    })
}

/// Posterior from cached sufficient statistics `Phi^T Phi` and `Phi^T y`.
pub fn posterior_from_stats(phi_t_phi: Vec<Vec<f64>>, phi_t_y: Vec<f64>, cfg: &BlrConfig) -> Result<WeightPosterior> {
    let p = phi_t_y.len();
    let ptp = DMatrix::from_fn(p, p, |i, j| phi_t_phi[i][j]);
    posterior_from_matrices(ptp, DVector::from_vec(phi_t_y), cfg)
}

/// Posterior mean and variance of `phi(x, a)^T w` (no observation noise).
pub fn blr_latent(post: &WeightPosterior, basis: &BasisConfig, x: &[f64], action: Action) -> (f64, f64) {
    let phi = DVector::from_vec(basis.features(x, action));
    let m = DVector::from_column_slice(&post.mean);
    let s = post.cov_matrix();
    (phi.dot(&m), (phi.transpose() * &s * &phi)[(0, 0)].max(0.0))
}

pub fn blr_latent_cov(post: &WeightPosterior, basis: &BasisConfig, x: &[f64], x2: &[f64], action: Action) -> f64 {
    let p1 = DVector::from_vec(basis.features(x, action));
    let p2 = DVector::from_vec(basis.features(x2, action));
    (p1.transpose() * post.cov_matrix() * p2)[(0, 0)]
}

pub fn blr_predict(
    post: &WeightPosterior,
    basis: &BasisConfig,
    cfg: &BlrConfig,
    x: &[f64],
    action: Action,
) -> GaussianPredictive {
    let (m, v) = blr_latent(post, basis, x, action);
    GaussianPredictive::new(m, cfg.noise_variance + v)
}
