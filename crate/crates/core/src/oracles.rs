//! Simulated answer sources. Answers depend only on the oracle seed, the
//! query identity and the ground truth, never on model state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::active_learning::pool::mix_seed;
use crate::active_learning::Query;
use crate::data::{Action, OutcomeKind};
use crate::error::{invalid, Result};
use crate::reliability::DecisionOrientation;

/// Expected potential outcomes `E[Y[a] | x]`.
pub trait GroundTruth: Sync {
    fn expected(&self, x: &[f64], a: Action) -> f64;

    fn outcome_kind(&self) -> OutcomeKind {
        OutcomeKind::Continuous
    }
}

/// Ground truth backed by a closure.
pub struct FnTruth<F> {
    f: F,
    kind: OutcomeKind,
}

impl<F: Fn(&[f64], Action) -> f64 + Sync> FnTruth<F> {
    pub fn new(kind: OutcomeKind, f: F) -> Self {
        Self { f, kind }
    }
}

impl<F: Fn(&[f64], Action) -> f64 + Sync> GroundTruth for FnTruth<F> {
    fn expected(&self, x: &[f64], a: Action) -> f64 {
        (self.f)(x, a)
    }

    fn outcome_kind(&self) -> OutcomeKind {
        self.kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    PointNoisy,
    ComparativeFlip,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub kind: OracleKind,
    #[serde(default)]
    pub point_noise_sd: f64,
    #[serde(default)]
    pub flip_probability: f64,
    #[serde(default)]
    pub seed: u64,
}

impl OracleConfig {
    pub fn point(point_noise_sd: f64, seed: u64) -> Self {
        Self {
            kind: OracleKind::PointNoisy,
            point_noise_sd,
            flip_probability: 0.0,
            seed,
        }
    }

    pub fn comparative(flip_probability: f64, seed: u64) -> Self {
        Self {
            kind: OracleKind::ComparativeFlip,
            point_noise_sd: 0.0,
            flip_probability,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.point_noise_sd >= 0.0) {
            return Err(invalid("point_noise_sd must be nonnegative"));
        }
        if !(0.0..0.5).contains(&self.flip_probability) {
            return Err(invalid("flip_probability must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

fn query_rng(cfg: &OracleConfig, q: &Query) -> ChaCha8Rng {
    let id = match *q {
        Query::Counterfactual { unit, action } => (unit as u64) * 4 + action.index() as u64,
        Query::Comparison { unit } => (unit as u64) * 4 + 2,
    };
    ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, id))
}

/// Noisy answer to a counterfactual query at covariates `x`. Binary ground
/// truths answer with a Bernoulli draw of the true success probability.
pub fn answer_point(truth: &dyn GroundTruth, x: &[f64], query: &Query, cfg: &OracleConfig) -> Result<f64> {
    if cfg.kind != OracleKind::PointNoisy {
        return Err(invalid(format!("oracle kind {:?} cannot answer point queries", cfg.kind)));
    }
    cfg.validate()?;
    let Query::Counterfactual { action, .. } = *query else {
        return Err(invalid("point oracle needs a counterfactual query"));
    };
    let mean = truth.expected(x, action);
    let mut rng = query_rng(cfg, query);
    match truth.outcome_kind() {
        OutcomeKind::Binary => Ok(if rng.random::<f64>() < mean { 1.0 } else { 0.0 }),
        OutcomeKind::Continuous => {
            if cfg.point_noise_sd == 0.0 {
                return Ok(mean);
            }
            let noise = Normal::new(0.0, cfg.point_noise_sd).map_err(|e| invalid(e.to_string()))?;
            Ok(mean + noise.sample(&mut rng))
        }
    }
}

/// Comparison bit (`true` when arm 1 is truly better under `orient`, ties
/// resolved as `false`), flipped with probability `flip_probability`.
pub fn answer_comparison(
    truth: &dyn GroundTruth,
    x: &[f64],
    query: &Query,
    cfg: &OracleConfig,
    orient: DecisionOrientation,
) -> Result<bool> {
    if cfg.kind != OracleKind::ComparativeFlip {
        return Err(invalid(format!(
            "oracle kind {:?} cannot answer comparison queries",
            cfg.kind
        )));
    }
    cfg.validate()?;
    let effect = truth.expected(x, Action::Treated) - truth.expected(x, Action::Control);
    let c = orient.preferred(effect) == Action::Treated;
    let mut rng = query_rng(cfg, query);
    let flip = rng.random::<f64>() < cfg.flip_probability;
    Ok(c ^ flip)
}
