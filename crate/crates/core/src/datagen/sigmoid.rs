use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Generated;
use crate::data::{Action, Dataset};
use crate::error::{invalid, Result};
use crate::oracles::GroundTruth;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SigmoidGenConfig {
    /// Treatment probability for `x <= 0`; `x > 0` uses its complement.
    pub propensity: f64,
    pub noise_sd: f64,
    /// Prior variance of the effect intercept and slope.
    pub effect_variance: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for SigmoidGenConfig {
    fn default() -> Self {
        Self {
            propensity: 0.5,
            noise_sd: 0.5,
            effect_variance: 0.5,
            seed: 0,
            n_train: 50,
            n_test: 500,
        }
    }
}

impl SigmoidGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.propensity) {
            return Err(invalid("propensity must lie in [0, 0.5]"));
        }
        if !(self.noise_sd >= 0.0) || !(self.effect_variance >= 0.0) {
            return Err(invalid("noise_sd and effect_variance must be nonnegative"));
        }
        Ok(())
    }
}

/// Outcome surface `f(x) + (beta0 + beta1 x) a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidTruth {
    pub beta0: f64,
    pub beta1: f64,
    pub b: f64,
}

impl SigmoidTruth {
    /// Draw a random outcome model.
    pub fn sample<R: Rng>(rng: &mut R, effect_variance: f64) -> Self {
        let sd = effect_variance.sqrt();
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        let beta0 = sd * z0;
        let beta1 = sd * z1;
        let b = if rng.random::<bool>() { 1.0 } else { -1.0 };
        Self { beta0, beta1, b }
    }

    pub fn baseline(&self, x: f64) -> f64 {
        2.0 * (1.0 / (1.0 + (-x + self.b).exp()) - 0.5)
    }

    pub fn effect(&self, x: f64) -> f64 {
        self.beta0 + self.beta1 * x
    }
}

impl GroundTruth for SigmoidTruth {
    fn expected(&self, x: &[f64], a: Action) -> f64 {
        self.baseline(x[0]) + self.effect(x[0]) * a.as_f64()
    }
}

/// Draw training rows for a fixed outcome model. Kept separate from model
/// sampling so one model can be paired with several propensities.
pub fn sample_training(truth: &SigmoidTruth, cfg: &SigmoidGenConfig, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let mut units = Vec::with_capacity(cfg.n_train);
    let mut actions = Vec::with_capacity(cfg.n_train);
    let mut outcomes = Vec::with_capacity(cfg.n_train);
    for _ in 0..cfg.n_train {
        let x: f64 = StandardNormal.sample(rng);
        let p = if x <= 0.0 { cfg.propensity } else { 1.0 - cfg.propensity };
        let a = Action::from_bit(rng.random::<f64>() < p);
        let noise: f64 = StandardNormal.sample(rng);
        outcomes.push(truth.expected(&[x], a) + cfg.noise_sd * noise);
        units.push(vec![x]);
        actions.push(a);
    }
    Dataset::factual(units, actions, outcomes)
}

pub fn sample_test(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| vec![StandardNormal.sample(rng)]).collect()
}

/// One-dimensional continuous-outcome generator with propensity-controlled
/// imbalance. Test units carry no action; their true effects are returned.
pub fn gen_sigmoid_continuous(cfg: &SigmoidGenConfig) -> Result<Generated<SigmoidTruth>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truth = SigmoidTruth::sample(&mut rng, cfg.effect_variance);
    let train = sample_training(&truth, cfg, &mut rng)?;
    let test_x = sample_test(cfg.n_test, &mut rng);
    Ok(Generated::assemble(train, test_x, truth))
}
