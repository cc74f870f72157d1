//! Decision policy, estimated and observed Type S error rates, and kernel
//! imbalance (MMD) between treated and control covariates.

use serde::{Deserialize, Serialize};

use crate::data::Action;
use crate::error::{invalid, Result};
use crate::models::predictive::GaussianPredictive;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionOrientation {
    #[default]
    HigherIsBetter,
    LowerIsBetter,
}

impl DecisionOrientation {
    /// +1 when larger outcomes are preferred, -1 otherwise.
    pub fn sign(self) -> f64 {
        match self {
            DecisionOrientation::HigherIsBetter => 1.0,
            DecisionOrientation::LowerIsBetter => -1.0,
        }
    }

    /// The preferred action given a (possibly estimated) effect `y[1] - y[0]`.
    /// A zero effect selects the control action.
    pub fn preferred(self, effect: f64) -> Action {
        Action::from_bit(self.sign() * effect > 0.0)
    }
}

/// Estimated Type S error rate at one unit, with the recommendation it refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeSEstimate {
    pub gamma_hat: f64,
    pub recommended_action: Action,
    pub effect_mean: f64,
    pub effect_sd: f64,
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

pub fn decide(p1: &GaussianPredictive, p0: &GaussianPredictive, orient: DecisionOrientation) -> Action {
    orient.preferred(p1.mean - p0.mean)
}

/// `Phi(-|E[tau]| / sd[tau])` for a Gaussian effect predictive.
pub fn estimate_type_s_gaussian(tau: &GaussianPredictive, orient: DecisionOrientation) -> Result<TypeSEstimate> {
    if !(tau.variance > 0.0) {
        return Err(invalid(format!(
            "effect variance must be positive, got {}",
            tau.variance
        )));
    }
    let sd = tau.variance.sqrt();
    let gamma_hat = if tau.mean == 0.0 {
        0.5
    } else {
        standard_normal_cdf(-tau.mean.abs() / sd).clamp(0.0, 0.5)
    };
    Ok(TypeSEstimate {
        gamma_hat,
        recommended_action: orient.preferred(tau.mean),
        effect_mean: tau.mean,
        effect_sd: sd,
    })
}

/// Type S estimate from paired posterior draws of the two arms' expected
/// outcomes: the fraction of draws whose ordering contradicts the
/// recommendation made from the draw means.
pub fn estimate_type_s_draws(draws1: &[f64], draws0: &[f64], orient: DecisionOrientation) -> Result<TypeSEstimate> {
    if draws1.is_empty() || draws0.is_empty() {
        return Err(invalid("draw lists must be nonempty"));
    }
    if draws1.len() != draws0.len() {
        return Err(invalid(format!(
            "paired draws must have equal length ({} vs {})",
            draws1.len(),
            draws0.len()
        )));
    }
    let n = draws1.len() as f64;
    let diffs: Vec<f64> = draws1.iter().zip(draws0).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let rec = orient.preferred(mean);
    // signed so that positive means "recommended arm is better"
    let s = orient.sign() * if rec == Action::Treated { 1.0 } else { -1.0 };
    let wrong = diffs.iter().filter(|&&d| s * d < 0.0).count() as f64;
    let gamma_hat = if mean == 0.0 { 0.5 } else { (wrong / n).clamp(0.0, 0.5) };
    Ok(TypeSEstimate {
        gamma_hat,
        recommended_action: rec,
        effect_mean: mean,
        effect_sd: var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedTypeS {
    pub rate: f64,
    /// Units counted in the rate.
    pub evaluated: usize,
    /// Units with exactly zero true effect, left out of the rate.
    pub excluded_zero_effect: usize,
}

/// Fraction of units where the chosen action is not the truly better one.
pub fn observed_type_s(decisions: &[Action], true_effects: &[f64], orient: DecisionOrientation) -> Result<ObservedTypeS> {
    if decisions.len() != true_effects.len() {
        return Err(invalid(format!(
            "decisions ({}) and true effects ({}) differ in length",
            decisions.len(),
            true_effects.len()
        )));
    }
    if decisions.is_empty() {
        return Err(invalid("at least one unit required"));
    }
    let mut wrong = 0usize;
    let mut evaluated = 0usize;
    for (&d, &e) in decisions.iter().zip(true_effects) {
        if e == 0.0 {
            continue;
        }
        evaluated += 1;
        if d != orient.preferred(e) {
            wrong += 1;
        }
    }
    Ok(ObservedTypeS {
        rate: if evaluated == 0 { 0.0 } else { wrong as f64 / evaluated as f64 },
        evaluated,
        excluded_zero_effect: decisions.len() - evaluated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceMeasure {
    pub mmd: f64,
    pub kernel_lengthscale: f64,
}

pub const DEFAULT_MMD_LENGTHSCALE: f64 = 0.8;

/// Biased (V-statistic) MMD with a Gaussian kernel, returned as the square
/// root of the clipped squared discrepancy.
pub fn mmd(sample_a: &[Vec<f64>], sample_b: &[Vec<f64>], lengthscale: f64) -> Result<ImbalanceMeasure> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(invalid("MMD needs two nonempty samples"));
    }
    if !(lengthscale > 0.0) {
        return Err(invalid("MMD length-scale must be positive"));
    }
    let d = sample_a[0].len();
    if sample_a.iter().chain(sample_b).any(|v| v.len() != d) {
        return Err(invalid("MMD samples must share one dimension"));
    }
    let inv = 1.0 / (2.0 * lengthscale * lengthscale);
    let k = |u: &[f64], v: &[f64]| {
        let sq: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        (-sq * inv).exp()
    };
    let mean_k = |xs: &[Vec<f64>], ys: &[Vec<f64>]| {
        let mut s = 0.0;
        for x in xs {
            for y in ys {
                s += k(x, y);
            }
        }
        s / (xs.len() * ys.len()) as f64
    };
    let sq = mean_k(sample_a, sample_a) + mean_k(sample_b, sample_b) - 2.0 * mean_k(sample_a, sample_b);
    Ok(ImbalanceMeasure {
        mmd: sq.max(0.0).sqrt(),
        kernel_lengthscale: lengthscale,
    })
}
