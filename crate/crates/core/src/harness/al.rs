//! Active-learning experiment loop: per repetition generate data, then for
//! every criterion and target run a sequential query session against a
//! simulated oracle. Criteria share data, model seeds and oracle seeds.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ContinuousSource, ExperimentConfig, ExperimentKind};
use super::correlation::Exclusion;
use super::stats::{bootstrap_ci, BootstrapSummary};
use crate::active_learning::{mix_seed, select_query, Answer, Criterion, KnnConfig, ModelSpec, PoolState, Query, QueryKind};
use crate::data::{Action, Dataset};
use crate::datagen::{
    gen_bernoulli_rbf, gen_sigmoid_continuous, load_tabular, subsample_indices, synthetic_standin, BernoulliRbfConfig,
    SigmoidGenConfig, TabularData,
};
use crate::error::{Error, Result};
use crate::exec::{map_range, ExecMode};
use crate::oracles::{answer_comparison, answer_point, GroundTruth, OracleConfig};
use crate::reliability::DecisionOrientation;

const STATE_STREAM: u64 = 0x5E55;
const ORACLE_STREAM: u64 = 0x0AC1E;
const RANDOM_STREAM: u64 = 0x7A5D;

/// Truth known only at listed covariate rows.
struct TableTruth {
    map: HashMap<Vec<u64>, [f64; 2]>,
}

impl TableTruth {
    fn new(units: &[Vec<f64>], truth: &[[f64; 2]]) -> Self {
        let map = units
            .iter()
            .zip(truth)
            .map(|(x, t)| (x.iter().map(|v| v.to_bits()).collect(), *t))
            .collect();
        Self { map }
    }
}

impl GroundTruth for TableTruth {
    fn expected(&self, x: &[f64], a: Action) -> f64 {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        self.map.get(&key).map_or(f64::NAN, |t| t[a.index()])
    }
}

/// Everything one repetition needs, shared read-only by its sessions.
pub struct Scenario {
    pub train: Dataset,
    pub targets: Vec<Vec<f64>>,
    pub target_effects: Vec<f64>,
    pub truth: Box<dyn GroundTruth + Send>,
    pub orientation: DecisionOrientation,
    pub spec: ModelSpec,
    pub query_kind: QueryKind,
    pub oracle: OracleConfig,
    pub seed: u64,
}

impl Scenario {
    /// Build repetition `rep` of the configured experiment.
    pub fn build(cfg: &ExperimentConfig, rep: usize) -> Result<Self> {
        let seed = mix_seed(cfg.seed, rep as u64);
        let oracle_seed = mix_seed(seed, ORACLE_STREAM);
        match cfg.kind {
            ExperimentKind::AlBinary | ExperimentKind::AlComparative => {
                let comparative = cfg.kind == ExperimentKind::AlComparative;
                let g = gen_bernoulli_rbf(&BernoulliRbfConfig {
                    seed,
                    ..cfg.binary.clone()
                })?;
                let spec = cfg.model.clone().unwrap_or_else(|| {
                    if comparative {
                        ModelSpec::comparative_default()
                    } else {
                        ModelSpec::logistic_default()
                    }
                });
                let (query_kind, oracle) = if comparative {
                    (QueryKind::Comparative, OracleConfig::comparative(cfg.oracle.flip_probability, oracle_seed))
                } else {
                    (QueryKind::Counterfactual, OracleConfig::point(0.0, oracle_seed))
                };
                Ok(Self {
                    target_effects: g.test_effects(),
                    train: g.train,
                    targets: g.test_x,
                    truth: Box::new(g.truth),
                    orientation: DecisionOrientation::LowerIsBetter,
                    spec,
                    query_kind,
                    oracle,
                    seed,
                })
            }
            ExperimentKind::AlContinuous => Self::continuous(cfg, seed, oracle_seed),
            ExperimentKind::Correlation => Err(Error::Config("correlation is not an active-learning experiment".into())),
        }
    }

    fn continuous(cfg: &ExperimentConfig, seed: u64, oracle_seed: u64) -> Result<Self> {
        let c = &cfg.continuous;
        let spec = cfg.model.clone().unwrap_or_else(ModelSpec::gp_default);
        let (train, targets, target_effects, truth, noise): (_, _, _, Box<dyn GroundTruth + Send>, _) = match c.source {
            ContinuousSource::Sigmoid => {
                let g = gen_sigmoid_continuous(&SigmoidGenConfig {
                    seed,
                    n_test: c.n_targets,
                    ..c.sigmoid
                })?;
                (g.train.clone(), g.test_x.clone(), g.test_effects(), Box::new(g.truth), c.sigmoid.noise_sd)
            }
            ContinuousSource::Standin | ContinuousSource::Tabular => {
                let (table, noise) = if c.source == ContinuousSource::Standin {
                    (synthetic_standin(&c.standin)?, c.standin.noise_sd)
                } else {
                    let src = c.tabular.as_ref().ok_or_else(|| Error::Config("missing tabular source".into()))?;
                    (load_tabular(&src.path, &src.schema)?, 1.0)
                };
                let (train, targets, effects, truth) = split_table(&table, c.n_train, c.n_targets, seed)?;
                (train, targets, effects, Box::new(truth), noise)
            }
        };
        Ok(Self {
            train,
            targets,
            target_effects,
            truth,
            orientation: DecisionOrientation::HigherIsBetter,
            spec,
            query_kind: QueryKind::Counterfactual,
            oracle: OracleConfig::point(cfg.oracle.point_noise_sd.unwrap_or(noise), oracle_seed),
            seed,
        })
    }
}

type TableSplit = (Dataset, Vec<Vec<f64>>, Vec<f64>, TableTruth);

fn split_table(
    table: &TabularData,
    n_train: usize,
    n_targets: usize,
    seed: u64,
) -> Result<TableSplit> {
    let truth = table
        .truth
        .as_ref()
        .ok_or_else(|| Error::Schema("simulated oracles need mu0/mu1 truth columns".into()))?;
    let n = table.dataset.len();
    let order = subsample_indices(n, (n_train + n_targets).min(n), seed)?;
    if order.len() < n_train + n_targets {
        return Err(Error::Config(format!("{n} rows cannot supply {n_train} training rows and {n_targets} targets")));
    }
    let (train_idx, target_idx) = order.split_at(n_train);
    let train = table.dataset.subset(train_idx);
    let train_truth: Vec<[f64; 2]> = train_idx.iter().map(|&i| truth[i]).collect();
    let targets = target_idx.iter().map(|&i| table.dataset.units()[i].clone()).collect();
    let effects = target_idx.iter().map(|&i| truth[i][1] - truth[i][0]).collect();
    Ok((train.clone(), targets, effects, TableTruth::new(train.units(), &train_truth)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub gamma_hat: f64,
    pub correct: bool,
    pub mmd: Option<f64>,
    pub seconds: f64,
}

fn snapshot(state: &PoolState, true_effect: f64, seconds: f64) -> Result<Snapshot> {
    let est = state.target_type_s()?;
    Ok(Snapshot {
        gamma_hat: est.gamma_hat,
        correct: est.recommended_action == state.orientation().preferred(true_effect),
        mmd: state.imbalance()?.map(|m| m.mmd),
        seconds,
    })
}

/// Run one query session and return `n_queries + 1` snapshots. If the pool
/// runs dry the last state is repeated.
pub fn run_session(
    sc: &Scenario,
    target: usize,
    criterion: Criterion,
    n_queries: usize,
    knn: Option<KnnConfig>,
    cfg: &ExperimentConfig,
    exec: ExecMode,
) -> Result<Vec<Snapshot>> {
    let clock = Instant::now();
    let mut state = PoolState::new(
        sc.train.clone(),
        sc.targets[target].clone(),
        sc.orientation,
        sc.spec.clone(),
        sc.query_kind,
        cfg.lookahead,
        mix_seed(sc.seed, STATE_STREAM),
    )?;
    let effect = sc.target_effects[target];
    let mut out = vec![snapshot(&state, effect, clock.elapsed().as_secs_f64())?];
    let random_seed = mix_seed(mix_seed(sc.seed, RANDOM_STREAM), target as u64);
    for step in 0..n_queries {
        if state.pool().is_empty() {
            let last = out[out.len() - 1];
            out.push(Snapshot { seconds: 0.0, ..last });
            continue;
        }
        let clock = Instant::now();
        let sel = select_query(&state, criterion, knn, mix_seed(random_seed, step as u64), exec)?;
        let q = sel.selected;
        let x = state.unit(q.unit()).to_vec();
        let answer = match q {
            Query::Counterfactual { .. } => Answer::Point {
                value: answer_point(sc.truth.as_ref(), &x, &q, &sc.oracle)?,
            },
            Query::Comparison { .. } => Answer::Comparison {
                c: answer_comparison(sc.truth.as_ref(), &x, &q, &sc.oracle, sc.orientation)?,
            },
        };
        state = state.apply_answer(&q, answer)?;
        out.push(snapshot(&state, effect, clock.elapsed().as_secs_f64())?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlRow {
    pub repetition: usize,
    pub criterion: Criterion,
    pub step: usize,
    /// Mean over target sessions; `None` while an arm is empty.
    pub mmd: Option<f64>,
    pub gamma_hat: Vec<f64>,
    pub correct: Vec<bool>,
    pub wall_seconds: Option<f64>,
}

impl AlRow {
    pub fn correct_proportion(&self) -> f64 {
        self.correct.iter().filter(|c| **c).count() as f64 / self.correct.len().max(1) as f64
    }

    pub fn mean_gamma_hat(&self) -> f64 {
        self.gamma_hat.iter().sum::<f64>() / self.gamma_hat.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub criterion: Criterion,
    pub step: usize,
    pub correct: BootstrapSummary,
    pub gamma_hat: BootstrapSummary,
    pub mmd_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: ExperimentKind,
    pub repetitions: usize,
    pub n_queries: usize,
    pub criteria: Vec<Criterion>,
    pub n_targets: usize,
    pub rows: Vec<AlRow>,
    pub summary: Vec<StepSummary>,
    pub excluded: Vec<Exclusion>,
}

impl RunRecord {
    pub fn step_summary(&self, criterion: Criterion, step: usize) -> Option<&StepSummary> {
        self.summary.iter().find(|s| s.criterion == criterion && s.step == step)
    }
}

pub fn run_al(cfg: &ExperimentConfig, exec: ExecMode) -> Result<RunRecord> {
    if cfg.kind == ExperimentKind::Correlation {
        return Err(Error::Config("run_al needs an active-learning experiment kind".into()));
    }
    cfg.validate()?;
    let knn = cfg.knn.map(|k| KnnConfig { k });
    let scenarios = map_range(cfg.repetitions, exec, |rep| Scenario::build(cfg, rep));

    struct Job {
        rep: usize,
        criterion: usize,
        target: usize,
    }
    let mut jobs = Vec::new();
    for (rep, sc) in scenarios.iter().enumerate() {
        if let Ok(sc) = sc {
            for criterion in 0..cfg.criteria.len() {
                for target in 0..sc.targets.len() {
                    jobs.push(Job { rep, criterion, target });
                }
            }
        }
    }
    let sessions = map_range(jobs.len(), exec, |i| {
        let j = &jobs[i];
        let sc = scenarios[j.rep].as_ref().expect("only built scenarios are scheduled");
        // Candidate scoring runs sequentially here; the sessions themselves
        // already saturate the pool.
        let inner = if exec.is_parallel() { ExecMode::Sequential } else { exec };
        run_session(sc, j.target, cfg.criteria[j.criterion], cfg.n_queries, knn, cfg, inner)
    });

    let mut excluded = Vec::new();
    let mut per_rep: Vec<Option<Vec<Vec<Vec<Snapshot>>>>> = scenarios
        .iter()
        .enumerate()
        .map(|(rep, sc)| match sc {
            Ok(sc) => Some(vec![vec![Vec::new(); sc.targets.len()]; cfg.criteria.len()]),
            Err(e) => {
                tracing::warn!(repetition = rep, "repetition excluded: {e}");
                excluded.push(Exclusion {
                    repetition: rep,
                    detail: format!("scenario: {e}"),
                });
                None
            }
        })
        .collect();
    for (job, result) in jobs.iter().zip(sessions) {
        match result {
            Ok(snaps) => {
                if let Some(slots) = per_rep[job.rep].as_mut() {
                    slots[job.criterion][job.target] = snaps;
                }
            }
            Err(e) => {
                if per_rep[job.rep].take().is_some() {
                    tracing::warn!(repetition = job.rep, "repetition excluded: {e}");
                    excluded.push(Exclusion {
                        repetition: job.rep,
                        detail: format!("{} target {}: {e}", cfg.criteria[job.criterion], job.target),
                    });
                }
            }
        }
    }
    excluded.sort_by_key(|e| e.repetition);

    let mut rows = Vec::new();
    let mut n_targets = 0;
    for (rep, slots) in per_rep.iter().enumerate() {
        let Some(slots) = slots else { continue };
        for (ci, sessions) in slots.iter().enumerate() {
            n_targets = sessions.len();
            for step in 0..=cfg.n_queries {
                let snaps: Vec<&Snapshot> = sessions.iter().map(|s| &s[step]).collect();
                let mmds: Vec<f64> = snaps.iter().filter_map(|s| s.mmd).collect();
                rows.push(AlRow {
                    repetition: rep,
                    criterion: cfg.criteria[ci],
                    step,
                    mmd: (!mmds.is_empty()).then(|| mmds.iter().sum::<f64>() / mmds.len() as f64),
                    gamma_hat: snaps.iter().map(|s| s.gamma_hat).collect(),
                    correct: snaps.iter().map(|s| s.correct).collect(),
                    wall_seconds: cfg.record_timing.then(|| snaps.iter().map(|s| s.seconds).sum()),
                });
            }
        }
    }

    let mut summary = Vec::new();
    for (ci, &criterion) in cfg.criteria.iter().enumerate() {
        for step in 0..=cfg.n_queries {
            let sel: Vec<&AlRow> = rows.iter().filter(|r| r.criterion == criterion && r.step == step).collect();
            if sel.is_empty() {
                continue;
            }
            let seed = mix_seed(cfg.seed, ((ci as u64) << 32) | step as u64);
            let correct: Vec<f64> = sel.iter().map(|r| r.correct_proportion()).collect();
            let gamma: Vec<f64> = sel.iter().map(|r| r.mean_gamma_hat()).collect();
            let mmds: Vec<f64> = sel.iter().filter_map(|r| r.mmd).collect();
            summary.push(StepSummary {
                criterion,
                step,
                correct: bootstrap_ci(&correct, cfg.bootstrap_resamples, seed)?,
                gamma_hat: bootstrap_ci(&gamma, cfg.bootstrap_resamples, seed ^ 1)?,
                mmd_mean: (!mmds.is_empty()).then(|| mmds.iter().sum::<f64>() / mmds.len() as f64),
            });
        }
    }

    Ok(RunRecord {
        kind: cfg.kind,
        repetitions: cfg.repetitions,
        n_queries: cfg.n_queries,
        criteria: cfg.criteria.clone(),
        n_targets,
        rows,
        summary,
        excluded,
    })
}
