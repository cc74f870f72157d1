use serde::{Deserialize, Serialize};

/// Gaussian posterior predictive of one potential outcome at one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPredictive {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPredictive {
    pub fn new(mean: f64, variance: f64) -> Self {
        Self { mean, variance }
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Predictive of the individual treatment effect `y[1] - y[0]` from
/// independent per-arm predictives.
pub fn ite_predictive(p1: GaussianPredictive, p0: GaussianPredictive) -> GaussianPredictive {
    GaussianPredictive {
        mean: p1.mean - p0.mean,
        variance: p1.variance + p0.variance,
    }
}
