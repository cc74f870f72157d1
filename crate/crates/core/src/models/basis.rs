use serde::{Deserialize, Serialize};

use crate::data::Action;
use crate::error::{invalid, Result};

/// Radial basis functions `exp(-|x - c|^2 / (2 l^2))`, optionally duplicated
/// with an action multiplier so that `phi(x, a) = [phi(x), a * phi(x)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisConfig {
    pub centers: Vec<Vec<f64>>,
    pub lengthscale: f64,
    pub includes_interaction: bool,
}

impl BasisConfig {
    pub fn new(centers: Vec<Vec<f64>>, lengthscale: f64, includes_interaction: bool) -> Result<Self> {
        let b = Self {
            centers,
            lengthscale,
            includes_interaction,
        };
        b.validate()?;
        Ok(b)
    }

    /// Three unit-length-scale RBFs at -3, 0, 3 with action interaction.
    pub fn three_rbf() -> Self {
        Self {
            centers: vec![vec![-3.0], vec![0.0], vec![3.0]],
            lengthscale: 1.0,
            includes_interaction: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(invalid("basis length-scale must be positive"));
        }
        if self.centers.is_empty() {
            return Err(invalid("basis needs at least one center"));
        }
        Ok(())
    }

    pub fn n_rbf(&self) -> usize {
        self.centers.len()
    }

    pub fn n_features(&self) -> usize {
        if self.includes_interaction {
            2 * self.centers.len()
        } else {
            self.centers.len()
        }
    }

    pub fn rbf(&self, x: &[f64]) -> Vec<f64> {
        let two_l2 = 2.0 * self.lengthscale * self.lengthscale;
        self.centers
            .iter()
            .map(|c| {
                let sq: f64 = c.iter().zip(x).map(|(ci, xi)| (xi - ci).powi(2)).sum();
                (-sq / two_l2).exp()
            })
            .collect()
    }

    pub fn features(&self, x: &[f64], action: Action) -> Vec<f64> {
        let phi = self.rbf(x);
        if !self.includes_interaction {
            return phi;
        }
        let a = action.as_f64();
        let mut out = phi.clone();
        out.extend(phi.iter().map(|p| p * a));
        out
    }
}
