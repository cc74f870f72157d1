//! Imbalance versus Type S error: sweep outcome models and propensities,
//! fit per-arm GPs, and correlate MMD, mean estimated and observed error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use super::stats::{pearson, Correlation};
use crate::active_learning::{mix_seed, ModelSpec};
use crate::data::Action;
use crate::datagen::{SigmoidGenConfig, SigmoidTruth};
use crate::error::{Error, Result};
use crate::exec::{map_range, ExecMode};
use crate::oracles::GroundTruth;
use crate::reliability::{mmd, observed_type_s, DecisionOrientation, DEFAULT_MMD_LENGTHSCALE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub repetition: usize,
    pub n_train: usize,
    pub model: usize,
    pub propensity: f64,
    pub mmd: f64,
    pub gamma_hat: f64,
    pub gamma_observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSet {
    /// `None` for the pooled set.
    pub n_train: Option<usize>,
    pub repetition: Option<usize>,
    pub gamma_hat_vs_observed: Correlation,
    pub mmd_vs_observed: Correlation,
    pub mmd_vs_gamma_hat: Correlation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub repetition: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rows: Vec<CorrelationRow>,
    pub correlations: Vec<CorrelationSet>,
    pub excluded: Vec<Exclusion>,
}

struct Cell {
    repetition: usize,
    n_train: usize,
    model: usize,
    propensity_index: usize,
}

fn run_cell(cfg: &ExperimentConfig, spec: &ModelSpec, cell: &Cell) -> Result<CorrelationRow> {
    let c = &cfg.correlation;
    let orient = DecisionOrientation::HigherIsBetter;
    let rep_seed = mix_seed(cfg.seed, cell.repetition as u64);
    let model_seed = mix_seed(rep_seed, cell.model as u64);
    // The outcome model and test set depend only on the model index so every
    // propensity and sample size sees the same truth.
    let mut rng = ChaCha8Rng::seed_from_u64(model_seed);
    let truth = SigmoidTruth::sample(&mut rng, c.effect_variance);
    let test_x = crate::datagen::sigmoid_test_units(c.n_test, &mut rng);
    let propensity = c.propensities[cell.propensity_index];
    let gen = SigmoidGenConfig {
        propensity,
        noise_sd: c.noise_sd,
        effect_variance: c.effect_variance,
        seed: 0,
        n_train: cell.n_train,
        n_test: 0,
    };
    gen.validate()?;
    let train_seed = mix_seed(model_seed, ((cell.n_train as u64) << 8) | cell.propensity_index as u64);
    let mut train_rng = ChaCha8Rng::seed_from_u64(train_seed);
    let train = crate::datagen::sigmoid_training(&truth, &gen, &mut train_rng)?;

    let treated = train.covariates_for(Action::Treated);
    let control = train.covariates_for(Action::Control);
    if treated.is_empty() || control.is_empty() {
        return Err(Error::InvalidArgument("one arm has no training rows".into()));
    }
    let imbalance = mmd(&treated, &control, DEFAULT_MMD_LENGTHSCALE)?.mmd;
    let fitted = spec.fit(&train, &[], orient, mix_seed(train_seed, 1))?;
    let mut gamma_sum = 0.0;
    let mut decisions = Vec::with_capacity(test_x.len());
    let mut effects = Vec::with_capacity(test_x.len());
    for x in &test_x {
        let est = fitted.type_s(x, orient)?;
        gamma_sum += est.gamma_hat;
        decisions.push(est.recommended_action);
        effects.push(truth.expected(x, Action::Treated) - truth.expected(x, Action::Control));
    }
    let observed = observed_type_s(&decisions, &effects, orient)?;
    Ok(CorrelationRow {
        repetition: cell.repetition,
        n_train: cell.n_train,
        model: cell.model,
        propensity,
        mmd: imbalance,
        gamma_hat: gamma_sum / test_x.len() as f64,
        gamma_observed: observed.rate,
    })
}

fn correlate(rows: &[&CorrelationRow], n_train: Option<usize>, repetition: Option<usize>) -> Option<CorrelationSet> {
    if rows.len() < 3 {
        return None;
    }
    let col = |f: fn(&CorrelationRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
    let (m, g, o) = (col(|r| r.mmd), col(|r| r.gamma_hat), col(|r| r.gamma_observed));
    Some(CorrelationSet {
        n_train,
        repetition,
        gamma_hat_vs_observed: pearson(&g, &o).ok()?,
        mmd_vs_observed: pearson(&m, &o).ok()?,
        mmd_vs_gamma_hat: pearson(&m, &g).ok()?,
    })
}

pub fn run_correlation(cfg: &ExperimentConfig, exec: ExecMode) -> Result<CorrelationResult> {
    if cfg.kind != ExperimentKind::Correlation {
        return Err(Error::Config("run_correlation needs kind = \"correlation\"".into()));
    }
    cfg.validate()?;
    let spec = cfg.model.clone().unwrap_or_else(ModelSpec::gp_default);
    let c = &cfg.correlation;
    let mut cells = Vec::new();
    for repetition in 0..cfg.repetitions {
        for &n_train in &c.n_train {
            for model in 0..c.n_models {
                for propensity_index in 0..c.propensities.len() {
                    cells.push(Cell {
                        repetition,
                        n_train,
                        model,
                        propensity_index,
                    });
                }
            }
        }
    }
    let results = map_range(cells.len(), exec, |i| run_cell(cfg, &spec, &cells[i]));
    let mut rows = Vec::with_capacity(cells.len());
    let mut excluded = Vec::new();
    for (cell, r) in cells.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                tracing::warn!(
                    repetition = cell.repetition,
                    model = cell.model,
                    n_train = cell.n_train,
                    "correlation cell excluded: {e}"
                );
                excluded.push(Exclusion {
                    repetition: cell.repetition,
                    detail: format!(
                        "model {} propensity {} n_train {}: {e}",
                        cell.model, c.propensities[cell.propensity_index], cell.n_train
                    ),
                });
            }
        }
    }

    let mut correlations = Vec::new();
    let all: Vec<&CorrelationRow> = rows.iter().collect();
    correlations.extend(correlate(&all, None, None));
    for &n in &c.n_train {
        let subset: Vec<&CorrelationRow> = rows.iter().filter(|r| r.n_train == n).collect();
        correlations.extend(correlate(&subset, Some(n), None));
        if cfg.repetitions > 1 {
            for rep in 0..cfg.repetitions {
                let subset: Vec<&CorrelationRow> =
                    rows.iter().filter(|r| r.n_train == n && r.repetition == rep).collect();
                correlations.extend(correlate(&subset, Some(n), Some(rep)));
            }
        }
    }
    Ok(CorrelationResult {
        rows,
        correlations,
        excluded,
    })
}
