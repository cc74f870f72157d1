//! Synthetic generators and the tabular loader.

mod bernoulli;
mod sigmoid;
mod tabular;

pub use bernoulli::{gen_bernoulli_rbf, BernoulliRbfConfig, BernoulliRbfTruth};
pub use sigmoid::{
    gen_sigmoid_continuous, sample_test as sigmoid_test_units, sample_training as sigmoid_training, SigmoidGenConfig,
    SigmoidTruth,
};
pub use tabular::{
    load_tabular, parse_tabular, subsample_indices, synthetic_standin, write_tabular, StandinConfig, TabularData,
    TabularSchema,
};

use crate::data::{Action, Dataset};
use crate::oracles::GroundTruth;

/// Training data plus evaluation units with their true expected outcomes.
#[derive(Debug, Clone)]
pub struct Generated<T> {
    pub train: Dataset,
    pub test_x: Vec<Vec<f64>>,
    /// `[E Y[0], E Y[1]]` per test unit.
    pub test_expected: Vec<[f64; 2]>,
    pub truth: T,
}

impl<T: GroundTruth> Generated<T> {
    pub fn test_effects(&self) -> Vec<f64> {
        self.test_expected.iter().map(|e| e[1] - e[0]).collect()
    }

    pub(crate) fn assemble(train: Dataset, test_x: Vec<Vec<f64>>, truth: T) -> Self {
        let test_expected = test_x
            .iter()
            .map(|x| [truth.expected(x, Action::Control), truth.expected(x, Action::Treated)])
            .collect();
        Self {
            train,
            test_x,
            test_expected,
            truth,
        }
    }
}
