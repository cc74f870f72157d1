//! Comma-separated tabular data: a header row, one row per unit.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Action, Dataset};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSchema {
    pub covariates: Vec<String>,
    pub action: String,
    pub outcome: String,
    /// Optional true expected outcomes under control and treatment.
    #[serde(default)]
    pub mu0: Option<String>,
    #[serde(default)]
    pub mu1: Option<String>,
    #[serde(default)]
    pub standardize: bool,
}

impl TabularSchema {
    pub fn new(covariates: Vec<String>, action: &str, outcome: &str) -> Self {
        Self {
            covariates,
            action: action.into(),
            outcome: outcome.into(),
            mu0: None,
            mu1: None,
            standardize: false,
        }
    }

    pub fn with_truth(mut self, mu0: &str, mu1: &str) -> Self {
        self.mu0 = Some(mu0.into());
        self.mu1 = Some(mu1.into());
        self
    }

    fn has_truth(&self) -> Result<bool> {
        match (&self.mu0, &self.mu1) {
            (Some(_), Some(_)) => Ok(true),
            (None, None) => Ok(false),
            _ => Err(Error::Schema("mu0 and mu1 must be given together".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularData {
    pub dataset: Dataset,
    /// `[E Y[0], E Y[1]]` per row when the schema names truth columns.
    pub truth: Option<Vec<[f64; 2]>>,
    /// Per-covariate (mean, sd) used for standardisation.
    pub scaling: Option<Vec<(f64, f64)>>,
}

pub fn load_tabular(path: impl AsRef<Path>, schema: &TabularSchema) -> Result<TabularData> {
    let file = std::fs::File::open(path)?;
    parse_tabular(file, schema)
}

pub fn parse_tabular<R: Read>(reader: R, schema: &TabularSchema) -> Result<TabularData> {
    if schema.covariates.is_empty() {
        return Err(Error::Schema("at least one covariate column is required".into()));
    }
    let with_truth = schema.has_truth()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let locate = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} not found in header")))
    };
    let cov_idx = schema.covariates.iter().map(|c| locate(c)).collect::<Result<Vec<_>>>()?;
    let act_idx = locate(&schema.action)?;
    let out_idx = locate(&schema.outcome)?;
    let truth_idx = if with_truth {
        Some((locate(schema.mu0.as_deref().unwrap_or_default())?, locate(schema.mu1.as_deref().unwrap_or_default())?))
    } else {
        None
    };

    let mut units = Vec::new();
    let mut actions = Vec::new();
    let mut outcomes = Vec::new();
    let mut truth = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let field = |idx: usize, name: &str| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(Error::Parse {
                    row,
                    column: name.into(),
                    message: "missing value".into(),
                });
            }
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: name.into(),
                message: format!("not a number: {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.into(),
                    message: "value is not finite".into(),
                });
            }
            Ok(v)
        };
        let x = cov_idx
            .iter()
            .zip(&schema.covariates)
            .map(|(&j, name)| field(j, name))
            .collect::<Result<Vec<_>>>()?;
        let a = field(act_idx, &schema.action)?;
        let action = match a {
            0.0 => Action::Control,
            1.0 => Action::Treated,
            _ => {
                return Err(Error::Parse {
                    row,
                    column: schema.action.clone(),
                    message: format!("action must be 0 or 1, got {a}"),
                })
            }
        };
        outcomes.push(field(out_idx, &schema.outcome)?);
        if let Some((i0, i1)) = truth_idx {
            truth.push([
                field(i0, schema.mu0.as_deref().unwrap_or_default())?,
                field(i1, schema.mu1.as_deref().unwrap_or_default())?,
            ]);
        }
        units.push(x);
        actions.push(action);
    }

    let scaling = schema.standardize.then(|| standardize(&mut units));
    Ok(TabularData {
        dataset: Dataset::factual(units, actions, outcomes)?,
        truth: with_truth.then_some(truth),
        scaling,
    })
}

/// Centre and scale each column in place; constant columns keep sd 1.
fn standardize(units: &mut [Vec<f64>]) -> Vec<(f64, f64)> {
    let n = units.len() as f64;
    let d = units.first().map_or(0, Vec::len);
    (0..d)
        .map(|j| {
            let mean = units.iter().map(|u| u[j]).sum::<f64>() / n;
            let var = units.iter().map(|u| (u[j] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            for u in units.iter_mut() {
                u[j] = (u[j] - mean) / sd;
            }
            (mean, sd)
        })
        .collect()
}

pub fn write_tabular<W: Write>(writer: W, schema: &TabularSchema, data: &Dataset, truth: Option<&[[f64; 2]]>) -> Result<()> {
    let with_truth = schema.has_truth()?;
    if data.dim().is_some_and(|d| d != schema.covariates.len()) {
        return Err(Error::Schema(format!(
            "dataset has {} covariates, schema names {}",
            data.dim().unwrap_or(0),
            schema.covariates.len()
        )));
    }
    let truth = match (with_truth, truth) {
        (true, Some(t)) if t.len() == data.len() => Some(t),
        (true, _) => return Err(Error::Schema("schema names truth columns but no matching truth given".into())),
        (false, _) => None,
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = schema.covariates.iter().map(String::as_str).collect();
    header.push(&schema.action);
    header.push(&schema.outcome);
    if let (Some(m0), Some(m1)) = (&schema.mu0, &schema.mu1) {
        if truth.is_some() {
            header.push(m0);
            header.push(m1);
        }
    }
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let row = data.row(i);
        let mut rec: Vec<String> = row.x.iter().map(f64::to_string).collect();
        rec.push(row.action.index().to_string());
        rec.push(row.y.to_string());
        if let Some(t) = truth {
            rec.push(t[i][0].to_string());
            rec.push(t[i][1].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Seeded subsample of `k` row indices out of `n`.
pub fn subsample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(invalid(format!("cannot draw {k} rows from {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, n, k).into_vec())
}

/// Shape and noise of the synthetic observational stand-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StandinConfig {
    pub n: usize,
    pub n_continuous: usize,
    pub n_binary: usize,
    pub noise_sd: f64,
    /// Average treatment effect on the treated.
    pub effect_on_treated: f64,
    pub seed: u64,
}

impl Default for StandinConfig {
    fn default() -> Self {
        Self {
            n: 747,
            n_continuous: 6,
            n_binary: 19,
            noise_sd: 1.0,
            effect_on_treated: 4.0,
            seed: 0,
        }
    }
}

/// Observational dataset with continuous and binary covariates, confounded
/// treatment assignment, a nonlinear control surface and a linear treated
/// surface. Truth columns are included.
pub fn synthetic_standin(cfg: &StandinConfig) -> Result<TabularData> {
    let d = cfg.n_continuous + cfg.n_binary;
    if d == 0 || cfg.n == 0 {
        return Err(invalid("stand-in needs at least one row and one covariate"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let levels = [0.0, 0.1, 0.2, 0.3, 0.4];
    let probs = [0.6, 0.1, 0.1, 0.1, 0.1];
    let beta: Vec<f64> = (0..d)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (l, p) in levels.iter().zip(probs) {
                acc += p;
                if u < acc {
                    return *l;
                }
            }
            levels[levels.len() - 1]
        })
        .collect();
    let assign: Vec<f64> = (0..d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.5 * z
        })
        .collect();

    let mut units = Vec::with_capacity(cfg.n);
    let mut actions = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let x: Vec<f64> = (0..d)
            .map(|j| {
                if j < cfg.n_continuous {
                    StandardNormal.sample(&mut rng)
                } else if rng.random::<f64>() < 0.5 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let score: f64 = x.iter().zip(&assign).map(|(a, b)| a * b).sum::<f64>() / (d as f64).sqrt();
        let p = 1.0 / (1.0 + (-(score - 0.8)).exp());
        actions.push(Action::from_bit(rng.random::<f64>() < p));
        units.push(x);
    }
    let dot = |x: &[f64], shift: f64| x.iter().zip(&beta).map(|(a, b)| (a + shift) * b).sum::<f64>();
    let mu0: Vec<f64> = units.iter().map(|x| dot(x, 0.5).exp()).collect();
    let lin: Vec<f64> = units.iter().map(|x| dot(x, 0.0)).collect();
    let treated: Vec<usize> = (0..cfg.n).filter(|&i| actions[i] == Action::Treated).collect();
    let omega = if treated.is_empty() {
        0.0
    } else {
        treated.iter().map(|&i| lin[i] - mu0[i]).sum::<f64>() / treated.len() as f64 - cfg.effect_on_treated
    };
    let truth: Vec<[f64; 2]> = (0..cfg.n).map(|i| [mu0[i], lin[i] - omega]).collect();
    let outcomes = (0..cfg.n)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            truth[i][actions[i].index()] + cfg.noise_sd * z
        })
        .collect::<Vec<f64>>();
    Ok(TabularData {
        dataset: Dataset::factual(units, actions, outcomes)?,
        truth: Some(truth),
        scaling: None,
    })
}

impl StandinConfig {
    /// Schema matching [`synthetic_standin`] when written with [`write_tabular`].
    pub fn schema(&self) -> TabularSchema {
        let cov = (0..self.n_continuous + self.n_binary).map(|j| format!("x{}", j + 1)).collect();
        TabularSchema::new(cov, "treatment", "y").with_truth("mu0", "mu1")
    }
}
