//! Probabilistic potential-outcome models.

pub mod basis;
pub mod blr;
pub mod gp;
pub mod kernel;
pub mod logistic;
pub mod optim;
pub mod predictive;

pub use basis::BasisConfig;
pub use blr::{blr_fit, blr_predict, BlrConfig, WeightPosterior};
pub use gp::{gp_fit, gp_fit_with, gp_predict, GpFitOptions, GpModel};
pub use kernel::{kernel_ard, GpHyperparams, HyperPrior};
pub use logistic::{
    comparative_augmented_fit, logistic_rbf_fit, logistic_theta_draws, sigmoid, ComparativeAnswer,
    ComparisonLikelihood, LatentPair, LogisticModel, WeightLaplacePosterior,
};
pub use predictive::{ite_predictive, GaussianPredictive};
