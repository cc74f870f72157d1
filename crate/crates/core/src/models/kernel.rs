//! Exponentiated-quadratic kernel with one length-scale per covariate.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// GP hyperparameters with separate noise levels for factual and elicited rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_factual: f64,
    pub noise_elicited: f64,
}

impl GpHyperparams {
    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64, noise: f64) -> Self {
        Self {
            lengthscales: vec![lengthscale; dim],
            signal_variance,
            noise_factual: noise,
            noise_elicited: noise,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .lengthscales
            .iter()
            .chain([&self.signal_variance, &self.noise_factual, &self.noise_elicited]);
        for v in all {
            if !(v.is_finite() && *v > 0.0) {
                return Err(invalid(format!("GP hyperparameters must be positive, got {v}")));
            }
        }
        if self.lengthscales.is_empty() {
            return Err(invalid("at least one length-scale required"));
        }
        Ok(())
    }

    /// Log-space parameter vector: `[ln l_1..ln l_d, ln sf2, ln sn2_D, ln sn2_L]`.
    pub fn to_log(&self) -> Vec<f64> {
        self.lengthscales
            .iter()
            .chain([&self.signal_variance, &self.noise_factual, &self.noise_elicited])
            .map(|v| v.ln())
            .collect()
    }

    pub fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 3;
        Self {
            lengthscales: theta[..d].iter().map(|v| v.exp()).collect(),
            signal_variance: theta[d].exp(),
            noise_factual: theta[d + 1].exp(),
            noise_elicited: theta[d + 2].exp(),
        }
    }
}

/// Gamma prior on every positive hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for HyperPrior {
    fn default() -> Self {
        Self {
            shape: 1.5,
            rate: 3.0,
        }
    }
}

impl HyperPrior {
    pub fn validate(&self) -> Result<()> {
        if self.shape > 0.0 && self.rate > 0.0 {
            Ok(())
        } else {
            Err(invalid("Gamma prior shape and rate must be positive"))
        }
    }

    /// Log density at `h > 0` (including the normalising constant).
    pub fn log_density(&self, h: f64) -> f64 {
        self.shape * self.rate.ln() - libm::lgamma(self.shape)
            + (self.shape - 1.0) * h.ln()
            - self.rate * h
    }

    /// Derivative of [`Self::log_density`] with respect to `ln h`.
    pub fn dlog_density_dlog(&self, h: f64) -> f64 {
        (self.shape - 1.0) - self.rate * h
    }
}

pub(crate) fn scaled_sqdist(x: &[f64], x2: &[f64], lengthscales: &[f64]) -> f64 {
    x.iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let d = (a - b) / l;
            d * d
        })
        .sum()
}

pub fn kernel_ard(x: &[f64], x2: &[f64], hp: &GpHyperparams) -> Result<f64> {
    let d = hp.dim();
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if x2.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x2.len(),
        });
    }
    Ok(kernel_unchecked(x, x2, hp))
}

#[inline]
pub(crate) fn kernel_unchecked(x: &[f64], x2: &[f64], hp: &GpHyperparams) -> f64 {
    hp.signal_variance * (-0.5 * scaled_sqdist(x, x2, &hp.lengthscales)).exp()
}
