//! One elicitation session and its status machine:
//! `READY -> AWAITING_ANSWER -> READY -> ... -> CLOSED`.
//!
//! All methods are synchronous; the HTTP layer serialises mutations per
//! session and runs them off the async executor.

use std::time::{SystemTime, UNIX_EPOCH};

use dmaware_core::active_learning::{
    mix_seed, select_query, Answer, Criterion, KnnConfig, LookaheadSettings, ModelSpec, PoolState, Query, QueryKind,
};
use dmaware_core::datagen::{parse_tabular, TabularSchema};
use dmaware_core::models::predictive::GaussianPredictive;
use dmaware_core::reliability::DecisionOrientation;
use dmaware_core::{Action, ExecMode};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

const SELECTION_STREAM: u64 = 0x5E1EC7;

/// Seed handed to `select_query` for the `step`-th query of a session. Only
/// the random criterion consumes it.
pub fn selection_seed(session_seed: u64, step: usize) -> u64 {
    mix_seed(mix_seed(session_seed, SELECTION_STREAM), step as u64)
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// CSV text with a header row.
    pub csv: String,
    pub schema: TabularSchema,
    /// Covariates of the unit the decision is about, in the CSV's units.
    pub target: Vec<f64>,
    #[serde(default)]
    pub orientation: DecisionOrientation,
    /// Defaults to a GP, or to the comparative model for comparative queries.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    /// Defaults to whatever the model supports.
    #[serde(default)]
    pub query_kind: Option<QueryKind>,
    #[serde(default = "default_criterion")]
    pub criterion: Criterion,
    #[serde(default)]
    pub knn: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lookahead: LookaheadSettings,
    /// Noise variance attached to elicited answers (GP models only). When
    /// unset it is learned like the other hyperparameters.
    #[serde(default)]
    pub elicited_noise_variance: Option<f64>,
}

fn default_criterion() -> Criterion {
    Criterion::DmAware
}

impl SessionConfig {
    pub fn resolved_spec(&self) -> Result<ModelSpec, ApiError> {
        let mut spec = match (&self.model, self.query_kind) {
            (Some(m), _) => m.clone(),
            (None, Some(QueryKind::Comparative)) => ModelSpec::comparative_default(),
            (None, _) => ModelSpec::gp_default(),
        };
        if let Some(v) = self.elicited_noise_variance {
            match &mut spec {
                ModelSpec::Gp { fit, .. } => fit.fixed_noise_elicited = Some(v),
                _ => return Err(ApiError::bad_request("elicited_noise_variance applies to GP models only")),
            }
        }
        Ok(spec)
    }

    pub fn resolved_query_kind(&self, spec: &ModelSpec) -> QueryKind {
        self.query_kind.unwrap_or(match spec {
            ModelSpec::Comparative { .. } => QueryKind::Comparative,
            _ => QueryKind::Counterfactual,
        })
    }

    pub fn knn_config(&self) -> Result<Option<KnnConfig>, ApiError> {
        match self.knn {
            Some(0) => Err(ApiError::bad_request("knn must be positive")),
            k => Ok(k.map(|k| KnnConfig { k })),
        }
    }

    /// Parse the dataset and fit the initial model.
    pub fn build_state(&self) -> Result<PoolState, ApiError> {
        let spec = self.resolved_spec()?;
        let kind = self.resolved_query_kind(&spec);
        self.knn_config()?;
        let table = parse_tabular(self.csv.as_bytes(), &self.schema).map_err(ApiError::from_create)?;
        if self.target.len() != self.schema.covariates.len() {
            return Err(ApiError::bad_request(format!(
                "target has {} covariates, schema names {}",
                self.target.len(),
                self.schema.covariates.len()
            )));
        }
        if self.target.iter().any(|v| !v.is_finite()) {
            return Err(ApiError::bad_request("target covariates must be finite"));
        }
        let target = match &table.scaling {
            Some(s) => self.target.iter().zip(s).map(|(v, (m, sd))| (v - m) / sd).collect(),
            None => self.target.clone(),
        };
        PoolState::new(table.dataset, target, self.orientation, spec, kind, self.lookahead, self.seed)
            .map_err(ApiError::from_create)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Ready,
    AwaitingAnswer,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPredictives {
    pub control: GaussianPredictive,
    pub treated: GaussianPredictive,
}

/// What a human needs to answer the pending query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCard {
    pub step: usize,
    pub query: Query,
    pub covariates: Vec<f64>,
    /// Arm whose outcome is asked for; `None` for comparisons.
    pub action: Option<Action>,
    /// Current predictive at the candidate. Latent scale for binary models.
    pub predictive: ArmPredictives,
    /// Acquisition score of the selected candidate, when finite.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub query: Query,
    pub answer: Answer,
    pub gamma_hat: f64,
    pub mmd: Option<f64>,
    pub recommended_action: Action,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub gamma_hat: f64,
    pub recommended_action: Action,
    pub effect_mean: f64,
    pub effect_sd: f64,
    pub mmd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub status: Status,
    pub criterion: Criterion,
    pub query_kind: QueryKind,
    pub orientation: DecisionOrientation,
    /// Target covariates on the model's scale.
    pub target: Vec<f64>,
    pub n_factual: usize,
    pub pool_size: usize,
    pub history_length: usize,
    #[serde(flatten)]
    pub estimate: Estimate,
    pub model_fingerprint: u64,
    pub pending_query: Option<QueryCard>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub status: Status,
    pub history_length: usize,
    pub pool_size: usize,
    #[serde(flatten)]
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryView {
    pub id: String,
    pub status: Status,
    pub entries: Vec<HistoryEntry>,
    /// Initial value followed by the value after each answer.
    pub gamma_hat_trajectory: Vec<f64>,
    pub mmd_trajectory: Vec<Option<f64>>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    knn: Option<KnnConfig>,
    state: PoolState,
    status: Status,
    pending: Option<QueryCard>,
    history: Vec<HistoryEntry>,
    initial: Estimate,
    current: Estimate,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

fn estimate(state: &PoolState) -> Result<Estimate, ApiError> {
    let est = state.target_type_s().map_err(|e| ApiError::internal(e.to_string()))?;
    let mmd = state.imbalance().map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Estimate {
        gamma_hat: est.gamma_hat,
        recommended_action: est.recommended_action,
        effect_mean: est.effect_mean,
        effect_sd: est.effect_sd,
        mmd: mmd.map(|m| m.mmd),
    })
}

impl Session {
    pub fn create(id: String, config: SessionConfig) -> Result<Self, ApiError> {
        let state = config.build_state()?;
        let knn = config.knn_config()?;
        let initial = estimate(&state)?;
        Ok(Self {
            id,
            config,
            knn,
            state,
            status: Status::Ready,
            pending: None,
            history: Vec::new(),
            initial,
            current: initial,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &PoolState {
        &self.state
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn pending(&self) -> Option<&QueryCard> {
        self.pending.as_ref()
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    /// Issue the next query, or return the pending one unchanged. The flag is
    /// true when a new query was selected.
    pub fn next_query(&mut self, exec: ExecMode) -> Result<(QueryCard, bool), ApiError> {
        match self.status {
            Status::Closed => return Err(ApiError::conflict("session is closed")),
            Status::AwaitingAnswer => {
                let card = self.pending.clone().expect("awaiting status implies a pending query");
                return Ok((card, false));
            }
            Status::Ready => {}
        }
        if self.state.pool().is_empty() {
            return Err(ApiError::conflict("pool exhausted"));
        }
        let step = self.history.len();
        let sel = select_query(
            &self.state,
            self.config.criterion,
            self.knn,
            selection_seed(self.config.seed, step),
            exec,
        )
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let query = sel.selected;
        let score = sel
            .scores
            .iter()
            .find(|(q, s)| *q == query && s.is_finite())
            .map(|s| s.1);
        let covariates = self.state.unit(query.unit()).to_vec();
        let model = self.state.model();
        let arm = |a| model.predictive(&covariates, a).map_err(|e| ApiError::internal(e.to_string()));
        let predictive = ArmPredictives {
            control: arm(Action::Control)?,
            treated: arm(Action::Treated)?,
        };
        let card = QueryCard {
            step,
            query,
            action: match query {
                Query::Counterfactual { action, .. } => Some(action),
                Query::Comparison { .. } => None,
            },
            covariates,
            predictive,
            score,
        };
        self.pending = Some(card.clone());
        self.status = Status::AwaitingAnswer;
        Ok((card, true))
    }

    /// Apply the answer to the pending query. On error the session is
    /// unchanged.
    pub fn submit_answer(&mut self, answer: Answer, timestamp_ms: u64) -> Result<AnswerOutcome, ApiError> {
        match self.status {
            Status::Closed => return Err(ApiError::conflict("session is closed")),
            Status::Ready => return Err(ApiError::conflict("no pending query")),
            Status::AwaitingAnswer => {}
        }
        let query = self.pending.as_ref().expect("awaiting status implies a pending query").query;
        self.state
            .validate_answer(&query, &answer)
            .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let next = self
            .state
            .apply_answer(&query, answer)
            .map_err(|e| ApiError::unprocessable(e.to_string()))?;
        let est = estimate(&next)?;
        self.state = next;
        self.current = est;
        self.history.push(HistoryEntry {
            step: self.history.len(),
            query,
            answer,
            gamma_hat: est.gamma_hat,
            mmd: est.mmd,
            recommended_action: est.recommended_action,
            timestamp_ms,
        });
        self.pending = None;
        self.status = Status::Ready;
        Ok(AnswerOutcome {
            status: self.status,
            history_length: self.history.len(),
            pool_size: self.state.pool().len(),
            estimate: est,
        })
    }

    pub fn close(&mut self) -> Result<(), ApiError> {
        if self.status == Status::Closed {
            return Err(ApiError::conflict("session is already closed"));
        }
        self.status = Status::Closed;
        self.pending = None;
        Ok(())
    }

    pub fn current_estimate(&self) -> Estimate {
        self.current
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            status: self.status,
            criterion: self.config.criterion,
            query_kind: self.state.query_kind(),
            orientation: self.state.orientation(),
            target: self.state.target().to_vec(),
            n_factual: self.state.n_factual(),
            pool_size: self.state.pool().len(),
            history_length: self.history.len(),
            estimate: self.current,
            model_fingerprint: self.state.model().fingerprint(),
            pending_query: self.pending.clone(),
        }
    }

    pub fn history_view(&self) -> HistoryView {
        let mut gamma = vec![self.initial.gamma_hat];
        let mut mmd = vec![self.initial.mmd];
        for h in &self.history {
            gamma.push(h.gamma_hat);
            mmd.push(h.mmd);
        }
        HistoryView {
            id: self.id.clone(),
            status: self.status,
            entries: self.history.clone(),
            gamma_hat_trajectory: gamma,
            mmd_trajectory: mmd,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> SessionConfig {
        SessionConfig {
            csv: "x,a,y\n-1.0,0,0.2\n-0.5,0,0.1\n0.5,1,1.1\n1.0,1,1.3\n".into(),
            schema: TabularSchema::new(vec!["x".into()], "a", "y"),
            target: vec![0.0],
            orientation: DecisionOrientation::HigherIsBetter,
            model: None,
            query_kind: None,
            criterion: Criterion::DmAware,
            knn: None,
            seed: 1,
            lookahead: LookaheadSettings::default(),
            elicited_noise_variance: Some(0.05),
        }
    }

    #[test]
    fn fresh_session_is_ready_with_bounded_gamma() {
        let s = Session::create("a".into(), config()).unwrap();
        assert_eq!(s.status(), Status::Ready);
        let g = s.summary().estimate.gamma_hat;
        assert!((0.0..=0.5).contains(&g));
        assert!(s.history_view().entries.is_empty());
    }

    #[test]
    fn elicited_noise_is_pinned_on_the_gp() {
        let spec = config().resolved_spec().unwrap();
        match spec {
            ModelSpec::Gp { fit, .. } => assert_eq!(fit.fixed_noise_elicited, Some(0.05)),
            other => panic!("unexpected spec {other:?}"),
        }
        let mut c = config();
        c.model = Some(ModelSpec::logistic_default());
        assert_eq!(c.resolved_spec().unwrap_err().status, axum::http::StatusCode::BAD_REQUEST);
    }

    #[test]
    fn next_query_is_idempotent_until_answered() {
        let mut s = Session::create("a".into(), config()).unwrap();
        let (a, fresh_a) = s.next_query(ExecMode::Sequential).unwrap();
        let (b, fresh_b) = s.next_query(ExecMode::Sequential).unwrap();
        assert!(fresh_a && !fresh_b);
        assert_eq!(a, b);
        assert!(s.state().contains(&a.query));
    }

    #[test]
    fn standardised_target_uses_dataset_scaling() {
        let mut c = config();
        c.schema.standardize = true;
        c.target = vec![1.0];
        let s = Session::create("a".into(), c).unwrap();
        // mean 0, sample sd of {-1,-0.5,0.5,1} is sqrt(2.5/3)
        let expected = 1.0 / (2.5f64 / 3.0).sqrt();
        assert!((s.summary().target[0] - expected).abs() < 1e-12);
    }
}
