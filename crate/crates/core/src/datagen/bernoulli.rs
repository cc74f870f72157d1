use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Generated;
use crate::data::{Action, Dataset, OutcomeKind};
use crate::error::{invalid, Result};
use crate::models::logistic::sigmoid;
use crate::models::BasisConfig;
use crate::oracles::GroundTruth;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BernoulliRbfConfig {
    pub w0: Vec<f64>,
    pub w1: Vec<f64>,
    pub centers: Vec<f64>,
    pub lengthscale: f64,
    pub x_range: (f64, f64),
    /// Units with `x` below this are treated.
    pub assignment_threshold: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Inclusive endpoints of the equally spaced test grid.
    pub test_range: (f64, f64),
    pub seed: u64,
}

impl Default for BernoulliRbfConfig {
    fn default() -> Self {
        Self {
            w0: vec![0.5, 1.5, 1.5],
            w1: vec![1.0, -1.0, -3.0],
            centers: vec![-3.0, 0.0, 3.0],
            lengthscale: 1.0,
            x_range: (-4.5, 4.5),
            assignment_threshold: -1.5,
            n_train: 30,
            n_test: 9,
            test_range: (-4.05, 4.05),
            seed: 0,
        }
    }
}

impl BernoulliRbfConfig {
    pub fn basis(&self) -> Result<BasisConfig> {
        BasisConfig::new(self.centers.iter().map(|c| vec![*c]).collect(), self.lengthscale, true)
    }

    pub fn test_grid(&self) -> Vec<Vec<f64>> {
        let (lo, hi) = self.test_range;
        match self.n_test {
            0 => Vec::new(),
            1 => vec![vec![0.5 * (lo + hi)]],
            n => (0..n)
                .map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64])
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w0.len() != self.centers.len() || self.w1.len() != self.centers.len() {
            return Err(invalid("w0 and w1 need one weight per center"));
        }
        if !(self.x_range.0 < self.x_range.1) {
            return Err(invalid("x_range must be increasing"));
        }
        self.basis().map(|_| ())
    }
}

/// `theta(x, a) = sigmoid(w0 . phi(x) + a w1 . phi(x))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliRbfTruth {
    basis: BasisConfig,
    weights: Vec<f64>,
}

impl BernoulliRbfTruth {
    pub fn new(cfg: &BernoulliRbfConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            basis: cfg.basis()?,
            weights: cfg.w0.iter().chain(&cfg.w1).copied().collect(),
        })
    }

    pub fn theta(&self, x: &[f64], a: Action) -> f64 {
        let phi = self.basis.features(x, a);
        sigmoid(phi.iter().zip(&self.weights).map(|(p, w)| p * w).sum())
    }
}

impl GroundTruth for BernoulliRbfTruth {
    fn expected(&self, x: &[f64], a: Action) -> f64 {
        self.theta(x, a)
    }

    fn outcome_kind(&self) -> OutcomeKind {
        OutcomeKind::Binary
    }
}

/// Binary-outcome generator with deterministic threshold assignment.
pub fn gen_bernoulli_rbf(cfg: &BernoulliRbfConfig) -> Result<Generated<BernoulliRbfTruth>> {
    let truth = BernoulliRbfTruth::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = cfg.x_range;
    let mut units = Vec::with_capacity(cfg.n_train);
    let mut actions = Vec::with_capacity(cfg.n_train);
    let mut outcomes = Vec::with_capacity(cfg.n_train);
    for _ in 0..cfg.n_train {
        let x = rng.random_range(lo..hi);
        let a = Action::from_bit(x < cfg.assignment_threshold);
        let y = if rng.random::<f64>() < truth.theta(&[x], a) { 1.0 } else { 0.0 };
        units.push(vec![x]);
        actions.push(a);
        outcomes.push(y);
    }
    let train = Dataset::factual(units, actions, outcomes)?;
    Ok(Generated::assemble(train, cfg.test_grid(), truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_follows_threshold() {
        let g = gen_bernoulli_rbf(&BernoulliRbfConfig::default()).unwrap();
        for i in 0..g.train.len() {
            let x = g.train.units()[i][0];
            assert_eq!(g.train.actions()[i], Action::from_bit(x < -1.5));
            assert!((-4.5..4.5).contains(&x));
        }
        assert!(g.train.is_binary());
    }

    #[test]
    fn theta_at_origin_matches_formula() {
        let t = BernoulliRbfTruth::new(&BernoulliRbfConfig::default()).unwrap();
        let phi = |c: f64| (-(0.0 - c) * (0.0 - c) / 2.0f64).exp();
        let eta0 = 0.5 * phi(-3.0) + 1.5 * phi(0.0) + 1.5 * phi(3.0);
        let eta1 = eta0 + 1.0 * phi(-3.0) - 1.0 * phi(0.0) - 3.0 * phi(3.0);
        assert!((t.theta(&[0.0], Action::Control) - 1.0 / (1.0 + (-eta0).exp())).abs() < 1e-12);
        assert!((t.theta(&[0.0], Action::Treated) - 1.0 / (1.0 + (-eta1).exp())).abs() < 1e-12);
    }

    #[test]
    fn test_grid_is_equally_spaced() {
        let g = gen_bernoulli_rbf(&BernoulliRbfConfig::default()).unwrap();
        assert_eq!(g.test_x.len(), 9);
        assert!((g.test_x[0][0] + 4.05).abs() < 1e-12);
        assert!((g.test_x[8][0] - 4.05).abs() < 1e-12);
        for w in g.test_x.windows(2) {
            assert!((w[1][0] - w[0][0] - 1.0125).abs() < 1e-12);
        }
        for e in &g.test_expected {
            assert!(e.iter().all(|t| *t > 0.0 && *t < 1.0));
        }
    }

    #[test]
    fn reproducible_by_seed() {
        let cfg = BernoulliRbfConfig {
            seed: 9,
            ..Default::default()
        };
        assert_eq!(gen_bernoulli_rbf(&cfg).unwrap().train, gen_bernoulli_rbf(&cfg).unwrap().train);
    }
}
