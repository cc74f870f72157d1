//! Acquisition criteria and query selection.
//!
//! Every lookahead criterion is an expectation over the candidate's answer
//! distribution: Gauss-Hermite nodes over the answer predictive (including
//! elicitation noise) for real-valued answers, an exact two-branch sum for
//! bits and comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{kl_joint, FittedModel, JointPredictive, ModelSpec};
use super::pool::{mix_seed, Answer, PoolState, Query};
use super::quadrature::QuadratureRule;
use crate::data::{Action, Row, Source};
use crate::error::{invalid, Result};
use crate::exec::{map_ordered, ExecMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    DmAware,
    DmAwareExplore,
    TargetedIg,
    Eig,
    Uncertainty,
    Random,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::DmAware,
        Criterion::DmAwareExplore,
        Criterion::TargetedIg,
        Criterion::Eig,
        Criterion::Uncertainty,
        Criterion::Random,
    ];

    /// Whether smaller scores are better.
    pub fn minimizes(self) -> bool {
        self == Criterion::DmAware
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::DmAware => "dm_aware",
            Criterion::DmAwareExplore => "dm_aware_explore",
            Criterion::TargetedIg => "targeted_ig",
            Criterion::Eig => "eig",
            Criterion::Uncertainty => "uncertainty",
            Criterion::Random => "random",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.name() == s || c.name().replace('_', "-") == s)
            .ok_or_else(|| invalid(format!("unknown criterion '{s}'")))
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionScore {
    pub scores: Vec<(Query, f64)>,
    pub selected: Query,
    pub criterion: Criterion,
}

enum Update {
    /// Closed-form conditioning of one Gaussian arm on `y = m_c + innovation`
    /// observed at `x_c` with total predictive variance `s`.
    Gaussian {
        arm: Action,
        x_c: Vec<f64>,
        innovation: f64,
        s: f64,
    },
    Model(Box<FittedModel>),
}

struct Branch {
    weight: f64,
    update: Update,
}

fn bernoulli_entropy(p: f64) -> f64 {
    let h = |q: f64| if q <= 0.0 { 0.0 } else { -q * q.ln() };
    h(p) + h(1.0 - p)
}

fn refit_with(state: &PoolState, q: &Query, answer: Answer) -> Result<FittedModel> {
    let mut data = state.data().clone();
    let mut comps = state.comparisons().to_vec();
    match (q, answer) {
        (Query::Counterfactual { unit, action }, Answer::Point { value }) => data.push(Row {
            x: state.unit(*unit).to_vec(),
            action: *action,
            y: value,
            source: Source::Elicited,
        })?,
        (Query::Comparison { unit }, Answer::Comparison { c }) => comps.push(crate::models::ComparativeAnswer {
            unit_index: *unit,
            c,
        }),
        _ => return Err(invalid("answer type does not match query")),
    }
    let seed = mix_seed(state.seed(), 0xA11CE ^ (state.answered().len() as u64 + 1));
    state.spec().fit(&data, &comps, state.orientation(), seed)
}

fn branch_for(state: &PoolState, q: &Query, answer: Answer, weight: f64) -> Result<Branch> {
    let model = state.model();
    let update = match (q, answer) {
        (Query::Counterfactual { unit, action }, Answer::Point { value }) if model.is_gaussian() => {
            if state.settings().full_refit_lookahead {
                Update::Model(Box::new(refit_with(state, q, answer)?))
            } else {
                let x_c = state.unit(*unit).to_vec();
                let (m_c, v_c) = model.latent(&x_c, *action)?;
                Update::Gaussian {
                    arm: *action,
                    s: v_c + model.elicited_noise(*action),
                    innovation: value - m_c,
                    x_c,
                }
            }
        }
        (Query::Counterfactual { unit, action }, Answer::Point { value }) => {
            if state.settings().full_refit_lookahead {
                Update::Model(Box::new(refit_with(state, q, answer)?))
            } else {
                Update::Model(Box::new(model.with_observation(state.unit(*unit), *action, value)?))
            }
        }
        (Query::Comparison { unit }, Answer::Comparison { c }) => {
            let cmp = state
                .comparison_likelihood()
                .ok_or_else(|| invalid("comparison query on a non-comparative model"))?;
            Update::Model(Box::new(model.with_comparison(state.unit(*unit), c, cmp)?))
        }
        _ => return Err(invalid("answer type does not match query")),
    };
    Ok(Branch { weight, update })
}

/// Possible answers to `q` with their probabilities under the current model.
fn branches(state: &PoolState, q: &Query) -> Result<Vec<Branch>> {
    if !state.contains(q) {
        return Err(invalid(format!("candidate {q:?} is not in the pool")));
    }
    let model = state.model();
    match *q {
        Query::Counterfactual { unit, action } if model.is_gaussian() => {
            let x_c = state.unit(unit);
            let (m_c, v_c) = model.latent(x_c, action)?;
            let sd = (v_c + model.elicited_noise(action)).max(0.0).sqrt();
            let rule = QuadratureRule::gauss_hermite(state.settings().quadrature_order)?;
            rule.points(m_c, sd)
                .map(|(y, w)| branch_for(state, q, Answer::Point { value: y }, w))
                .collect()
        }
        Query::Counterfactual { unit, action } => {
            let p = model
                .mean_theta(state.unit(unit), action)
                .ok_or_else(|| invalid("binary answer distribution needs a logistic model"))?;
            Ok(vec![
                branch_for(state, q, Answer::Point { value: 1.0 }, p)?,
                branch_for(state, q, Answer::Point { value: 0.0 }, 1.0 - p)?,
            ])
        }
        Query::Comparison { unit } => {
            let cmp = state
                .comparison_likelihood()
                .ok_or_else(|| invalid("comparison query on a non-comparative model"))?;
            let p = model
                .prob_comparison_one(state.unit(unit), cmp)
                .ok_or_else(|| invalid("comparison probability needs a logistic model"))?;
            Ok(vec![
                branch_for(state, q, Answer::Comparison { c: true }, p)?,
                branch_for(state, q, Answer::Comparison { c: false }, 1.0 - p)?,
            ])
        }
    }
}

/// Joint predictive at `x` under each branch.
fn updated_joints(state: &PoolState, branches: &[Branch], x: &[f64]) -> Result<Vec<JointPredictive>> {
    let model = state.model();
    let base = model.joint(x)?;
    let mut cov_cache: Option<f64> = None;
    branches
        .iter()
        .map(|b| match &b.update {
            Update::Gaussian { arm, x_c, innovation, s } => {
                let c = match cov_cache {
                    Some(c) => c,
                    None => {
                        let c = model.latent_cov(x, x_c, *arm)?;
                        cov_cache = Some(c);
                        c
                    }
                };
                let mut j = base;
                let i = arm.index();
                if *s > 0.0 {
                    j.mean[i] += c / s * innovation;
                    j.cov[i][i] = (j.cov[i][i] - c * c / s).max(model.factual_noise(*arm));
                }
                Ok(j)
            }
            Update::Model(m) => m.joint(x),
        })
        .collect()
}

fn type_s_of(state: &PoolState, b: &Branch, joint: &JointPredictive) -> Result<f64> {
    let est = match &b.update {
        Update::Model(m) => m.type_s_from_joint(joint, state.orientation())?,
        Update::Gaussian { .. } => state.model().type_s_from_joint(joint, state.orientation())?,
    };
    Ok(est.gamma_hat)
}

/// Estimated Type S error at the target after hypothetically adding
/// `(candidate, answer)` to `L`. The recommendation is recomputed under the
/// updated model. The state is not modified.
pub fn lookahead_type_s(state: &PoolState, candidate: &Query, answer: Answer) -> Result<f64> {
    if !state.contains(candidate) {
        return Err(invalid(format!("candidate {candidate:?} is not in the pool")));
    }
    state.validate_answer(candidate, &answer)?;
    let b = [branch_for(state, candidate, answer, 1.0)?];
    let joints = updated_joints(state, &b, state.target())?;
    type_s_of(state, &b[0], &joints[0])
}

fn expected_post_gammas(state: &PoolState, candidate: &Query) -> Result<Vec<(f64, f64)>> {
    let bs = branches(state, candidate)?;
    let joints = updated_joints(state, &bs, state.target())?;
    bs.iter()
        .zip(&joints)
        .map(|(b, j)| Ok((b.weight, type_s_of(state, b, j)?)))
        .collect()
}

/// Expected post-query estimated Type S error at the target (lower is better).
pub fn score_dm_aware(state: &PoolState, candidate: &Query) -> Result<f64> {
    Ok(expected_post_gammas(state, candidate)?
        .into_iter()
        .map(|(w, g)| w * g)
        .sum())
}

/// Expected reduction of the entropy of `Bern(gamma_hat)` at the target
/// (higher is better).
pub fn score_dm_aware_explore(state: &PoolState, candidate: &Query) -> Result<f64> {
    let now = bernoulli_entropy(state.target_type_s()?.gamma_hat);
    let after: f64 = expected_post_gammas(state, candidate)?
        .into_iter()
        .map(|(w, g)| w * bernoulli_entropy(g))
        .sum();
    Ok(now - after)
}

fn expected_kl(state: &PoolState, candidate: &Query, locations: &[&[f64]]) -> Result<f64> {
    if locations.is_empty() {
        return Err(invalid("at least one evaluation location required"));
    }
    let bs = branches(state, candidate)?;
    let mut total = 0.0;
    for x in locations {
        let base = state.model().joint(x)?;
        let joints = updated_joints(state, &bs, x)?;
        total += bs.iter().zip(&joints).map(|(b, j)| b.weight * kl_joint(j, &base)).sum::<f64>();
    }
    Ok(total / locations.len() as f64)
}

/// Expected KL from the current to the updated predictive at the target
/// (higher is better).
pub fn score_targeted_ig(state: &PoolState, candidate: &Query) -> Result<f64> {
    expected_kl(state, candidate, &[state.target()])
}

/// Expected KL averaged over the given evaluation locations.
pub fn score_eig_at(state: &PoolState, candidate: &Query, locations: &[&[f64]]) -> Result<f64> {
    expected_kl(state, candidate, locations)
}

/// Expected KL averaged over every factual unit (the covariates of `D`,
/// which are also those of `U`), both arms.
pub fn score_eig(state: &PoolState, candidate: &Query) -> Result<f64> {
    let locs: Vec<&[f64]> = (0..state.n_factual()).map(|i| state.unit(i)).collect();
    expected_kl(state, candidate, &locs)
}

/// Predictive variance (continuous) or entropy of the predicted outcome
/// probability (binary, comparative) at the candidate (higher is better).
pub fn score_uncertainty(state: &PoolState, candidate: &Query) -> Result<f64> {
    if !state.contains(candidate) {
        return Err(invalid(format!("candidate {candidate:?} is not in the pool")));
    }
    let model = state.model();
    match *candidate {
        Query::Counterfactual { unit, action } => match model.mean_theta(state.unit(unit), action) {
            Some(theta) => Ok(bernoulli_entropy(theta)),
            None => Ok(model.predictive(state.unit(unit), action)?.variance),
        },
        Query::Comparison { unit } => {
            let cmp = state
                .comparison_likelihood()
                .ok_or_else(|| invalid("comparison query on a non-comparative model"))?;
            let p = model
                .prob_comparison_one(state.unit(unit), cmp)
                .ok_or_else(|| invalid("comparison probability needs a logistic model"))?;
            Ok(bernoulli_entropy(p))
        }
    }
}

pub fn score(state: &PoolState, criterion: Criterion, candidate: &Query) -> Result<f64> {
    match criterion {
        Criterion::DmAware => score_dm_aware(state, candidate),
        Criterion::DmAwareExplore => score_dm_aware_explore(state, candidate),
        Criterion::TargetedIg => score_targeted_ig(state, candidate),
        Criterion::Eig => score_eig(state, candidate),
        Criterion::Uncertainty => score_uncertainty(state, candidate),
        Criterion::Random => Ok(0.0),
    }
}

/// The `k` candidates nearest to the target under the model's own metric,
/// in pool order. Distance ties go to the lower unit index.
pub fn knn_filter(state: &PoolState, knn: KnnConfig) -> Result<Vec<Query>> {
    if knn.k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    let pool = state.pool();
    if knn.k >= pool.len() {
        return Ok(pool.to_vec());
    }
    let model = state.model();
    let mut ranked: Vec<(f64, Query)> = pool
        .iter()
        .map(|q| {
            let arm = match *q {
                Query::Counterfactual { action, .. } => action,
                Query::Comparison { .. } => Action::Treated,
            };
            (model.scaled_sqdist(state.unit(q.unit()), state.target(), arm), *q)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.tie_order(&b.1)));
    let keep: Vec<Query> = ranked.into_iter().take(knn.k).map(|(_, q)| q).collect();
    Ok(pool.iter().filter(|q| keep.contains(q)).copied().collect())
}

/// Index of the optimum with lowest-index tie-breaking; NaN never wins.
pub fn argbest(scores: &[(Query, f64)], minimize: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (q, s)) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let (bq, bs) = scores[b];
                let better = if minimize { *s < bs } else { *s > bs };
                if better || (*s == bs && q.tie_order(&bq).is_lt()) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.or(if scores.is_empty() { None } else { Some(0) })
}

pub fn select_query(
    state: &PoolState,
    criterion: Criterion,
    knn: Option<KnnConfig>,
    seed: u64,
    exec: ExecMode,
) -> Result<AcquisitionScore> {
    if state.pool().is_empty() {
        return Err(invalid("pool is empty"));
    }
    let candidates = match knn {
        Some(k) => knn_filter(state, k)?,
        None => state.pool().to_vec(),
    };
    if criterion == Criterion::Random {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let i = rng.random_range(0..candidates.len());
        return Ok(AcquisitionScore {
            scores: candidates.iter().map(|q| (*q, 0.0)).collect(),
            selected: candidates[i],
            criterion,
        });
    }
    let results = map_ordered(&candidates, exec, |q| score(state, criterion, q));
    let mut scores = Vec::with_capacity(candidates.len());
    for (q, r) in candidates.iter().zip(results) {
        scores.push((*q, r?));
    }
    let i = argbest(&scores, criterion.minimizes()).expect("nonempty candidate list");
    Ok(AcquisitionScore {
        selected: scores[i].0,
        scores,
        criterion,
    })
}

#[allow(dead_code)]
fn _assert_spec_send_sync() {
    fn is<T: Send + Sync>() {}
    is::<ModelSpec>();
    is::<PoolState>();
}
