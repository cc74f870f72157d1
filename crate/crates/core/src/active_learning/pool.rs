//! Elicitation state: factual data `D`, unanswered pool `U`, answered set
//! `L`, the target unit and the current fitted model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::model::{FittedModel, ModelSpec};
use crate::data::{Action, Dataset, OutcomeKind, Row, Source};
use crate::error::{invalid, Result};
use crate::models::logistic::ComparisonLikelihood;
use crate::models::ComparativeAnswer;
use crate::reliability::{mmd, DecisionOrientation, ImbalanceMeasure, TypeSEstimate, DEFAULT_MMD_LENGTHSCALE};

/// A pool candidate. Ordering is by unit index, then action, which is the
/// tie-break order used by query selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Query {
    Counterfactual { unit: usize, action: Action },
    Comparison { unit: usize },
}

impl Query {
    pub fn unit(&self) -> usize {
        match *self {
            Query::Counterfactual { unit, .. } | Query::Comparison { unit } => unit,
        }
    }

    fn sort_key(&self) -> (usize, usize) {
        match *self {
            Query::Counterfactual { unit, action } => (unit, action.index()),
            Query::Comparison { unit } => (unit, 0),
        }
    }

    /// Tie-break comparison: lowest unit index, then lowest action.
    pub fn tie_order(&self, other: &Query) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Answer {
    /// Outcome value for a counterfactual query (0 or 1 for binary outcomes).
    Point { value: f64 },
    /// `c = true` when arm 1 is the better arm under the session orientation.
    Comparison { c: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Counterfactual,
    Comparative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LookaheadSettings {
    pub quadrature_order: usize,
    /// Re-optimise hyperparameters inside every lookahead refit.
    pub full_refit_lookahead: bool,
    /// Re-optimise hyperparameters when an answer is applied.
    pub reoptimize_on_answer: bool,
}

impl Default for LookaheadSettings {
    fn default() -> Self {
        Self {
            quadrature_order: super::quadrature::DEFAULT_ORDER,
            full_refit_lookahead: false,
            reoptimize_on_answer: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PoolState {
    data: Dataset,
    n_factual: usize,
    pool: Vec<Query>,
    answered: Vec<(Query, Answer)>,
    comparisons: Vec<ComparativeAnswer>,
    target: Vec<f64>,
    orientation: DecisionOrientation,
    spec: ModelSpec,
    settings: LookaheadSettings,
    seed: u64,
    model: Arc<FittedModel>,
}

/// Derive an independent sub-seed (splitmix64 finaliser).
pub fn mix_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl PoolState {
    /// Fit the initial model and build the pool from the factual rows.
    pub fn new(
        factual: Dataset,
        target: Vec<f64>,
        orientation: DecisionOrientation,
        spec: ModelSpec,
        kind: QueryKind,
        settings: LookaheadSettings,
        seed: u64,
    ) -> Result<Self> {
        if factual.sources().iter().any(|s| *s != Source::Factual) {
            return Err(invalid("initial data must contain factual rows only"));
        }
        if let Some(d) = factual.dim() {
            if d != target.len() {
                return Err(crate::error::Error::DimensionMismatch {
                    expected: d,
                    got: target.len(),
                });
            }
        }
        match (kind, &spec) {
            (QueryKind::Comparative, ModelSpec::Comparative { .. }) => {}
            (QueryKind::Comparative, _) => return Err(invalid("comparative queries need a comparative model")),
            (QueryKind::Counterfactual, ModelSpec::Comparative { .. }) => {
                return Err(invalid("a comparative model needs comparative queries"))
            }
            _ => {}
        }
        let pool = (0..factual.len())
            .map(|i| match kind {
                QueryKind::Counterfactual => Query::Counterfactual {
                    unit: i,
                    action: factual.actions()[i].other(),
                },
                QueryKind::Comparative => Query::Comparison { unit: i },
            })
            .collect();
        let model = spec.fit(&factual, &[], orientation, mix_seed(seed, 0))?;
        Ok(Self {
            n_factual: factual.len(),
            data: factual,
            pool,
            answered: Vec::new(),
            comparisons: Vec::new(),
            target,
            orientation,
            spec,
            settings,
            seed,
            model: Arc::new(model),
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn factual(&self) -> Dataset {
        self.data.subset(&(0..self.n_factual).collect::<Vec<_>>())
    }

    pub fn n_factual(&self) -> usize {
        self.n_factual
    }

    pub fn pool(&self) -> &[Query] {
        &self.pool
    }

    pub fn answered(&self) -> &[(Query, Answer)] {
        &self.answered
    }

    pub fn comparisons(&self) -> &[ComparativeAnswer] {
        &self.comparisons
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn orientation(&self) -> DecisionOrientation {
        self.orientation
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn settings(&self) -> &LookaheadSettings {
        &self.settings
    }

    pub fn model(&self) -> &FittedModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn unit(&self, i: usize) -> &[f64] {
        &self.data.units()[i]
    }

    pub fn comparison_likelihood(&self) -> Option<ComparisonLikelihood> {
        match &self.spec {
            ModelSpec::Comparative { noise_scale, .. } => Some(ComparisonLikelihood {
                noise_scale: *noise_scale,
                orientation: self.orientation,
            }),
            _ => None,
        }
    }

    pub fn query_kind(&self) -> QueryKind {
        match self.spec {
            ModelSpec::Comparative { .. } => QueryKind::Comparative,
            _ => QueryKind::Counterfactual,
        }
    }

    pub fn contains(&self, q: &Query) -> bool {
        self.pool.contains(q)
    }

    /// Estimated Type S error at the target under the current model.
    pub fn target_type_s(&self) -> Result<TypeSEstimate> {
        self.model.type_s(&self.target, self.orientation)
    }

    /// MMD between treated and control covariates of `D` and `L`.
    /// `None` while one arm has no rows.
    pub fn imbalance(&self) -> Result<Option<ImbalanceMeasure>> {
        let t = self.data.covariates_for(Action::Treated);
        let c = self.data.covariates_for(Action::Control);
        if t.is_empty() || c.is_empty() {
            return Ok(None);
        }
        mmd(&t, &c, DEFAULT_MMD_LENGTHSCALE).map(Some)
    }

    /// Check that `answer` has the right type for `query`.
    pub fn validate_answer(&self, query: &Query, answer: &Answer) -> Result<()> {
        match (query, answer) {
            (Query::Counterfactual { .. }, Answer::Point { value }) => {
                if !value.is_finite() {
                    return Err(invalid("point answer must be finite"));
                }
                if self.spec.outcome_kind() == OutcomeKind::Binary && *value != 0.0 && *value != 1.0 {
                    return Err(invalid("binary outcome answers must be 0 or 1"));
                }
                Ok(())
            }
            (Query::Comparison { .. }, Answer::Comparison { .. }) => Ok(()),
            (Query::Counterfactual { .. }, Answer::Comparison { .. }) => {
                Err(invalid("comparison answer given to a counterfactual query"))
            }
            (Query::Comparison { .. }, Answer::Point { .. }) => Err(invalid("point answer given to a comparison query")),
        }
    }

    /// Record the answer in `L`, remove the query from `U` and refit.
    pub fn apply_answer(&self, query: &Query, answer: Answer) -> Result<PoolState> {
        let pos = self
            .pool
            .iter()
            .position(|q| q == query)
            .ok_or_else(|| invalid(format!("query {query:?} is not in the pool")))?;
        self.validate_answer(query, &answer)?;
        let mut next = self.clone();
        next.pool.remove(pos);
        match (query, answer) {
            (Query::Counterfactual { unit, action }, Answer::Point { value }) => {
                next.data.push(Row {
                    x: self.data.units()[*unit].clone(),
                    action: *action,
                    y: value,
                    source: Source::Elicited,
                })?;
            }
            (Query::Comparison { unit }, Answer::Comparison { c }) => {
                next.comparisons.push(ComparativeAnswer { unit_index: *unit, c });
            }
            _ => unreachable!("validated above"),
        }
        next.answered.push((*query, answer));
        let fit_seed = mix_seed(self.seed, next.answered.len() as u64);
        let model = if self.settings.reoptimize_on_answer {
            next.spec.fit(&next.data, &next.comparisons, self.orientation, fit_seed)?
        } else {
            self.model
                .refit_frozen(&next.spec, &next.data, &next.comparisons, self.orientation, fit_seed)?
        };
        next.model = Arc::new(model);
        Ok(next)
    }
}

pub fn apply_answer(state: &PoolState, query: &Query, answer: Answer) -> Result<PoolState> {
    state.apply_answer(query, answer)
}
