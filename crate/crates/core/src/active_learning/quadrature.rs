//! Gauss-Hermite quadrature (physicists' weight `exp(-t^2)`) for Gaussian
//! expectations.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::models::predictive::GaussianPredictive;

pub const DEFAULT_ORDER: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Nodes and weights by Newton iteration on the orthonormal Hermite
    /// recurrence, nodes in decreasing order.
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(invalid("quadrature order must be at least 1"));
        }
        let n = order;
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => {
                    let nn = (2 * n + 1) as f64;
                    nn.sqrt() - 1.85575 * nn.powf(-1.0 / 6.0)
                }
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            let mut converged = false;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(invalid(format!("Gauss-Hermite root {i} of order {n} did not converge")));
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        Ok(Self {
            order,
            nodes: x,
            weights: w,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() != self.order || self.weights.len() != self.order {
            return Err(invalid("quadrature rule length does not match its order"));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(invalid("quadrature weights must be positive"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - std::f64::consts::PI.sqrt()).abs() > 1e-12 {
            return Err(invalid(format!("quadrature weights sum to {total}, expected sqrt(pi)")));
        }
        Ok(())
    }

    /// Evaluation points `mu + sqrt(2) sd t_j` paired with normalised weights.
    pub fn points(&self, mean: f64, sd: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let norm = std::f64::consts::PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(t, w)| (mean + std::f64::consts::SQRT_2 * sd * t, w / norm))
    }
}

pub fn gauss_hermite_expect<F>(pred: &GaussianPredictive, integrand: F, rule: &QuadratureRule) -> f64
where
    F: Fn(f64) -> f64,
{
    rule.points(pred.mean, pred.variance.max(0.0).sqrt())
        .map(|(y, w)| w * integrand(y))
        .sum()
}
