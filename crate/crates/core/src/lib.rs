//! Reliability-aware treatment-decision support.
//!
//! Potential-outcome models ([`models`]) feed an estimate of the Type S
//! error rate, the probability that the recommended action is the worse one
//! ([`reliability`]). The [`active_learning`] module uses that estimate to
//! choose which counterfactual or comparative question to put to an oracle
//! ([`oracles`]) next. [`datagen`] and [`harness`] reproduce the simulation
//! protocols and emit result tables.

pub mod active_learning;
pub mod data;
pub mod datagen;
pub mod error;
pub mod exec;
pub mod harness;
mod linalg;
pub mod models;
pub mod oracles;
pub mod reliability;

pub use data::{Action, Dataset, OutcomeKind, Row, Source};
pub use error::{Error, FitError, Result};
pub use exec::ExecMode;
