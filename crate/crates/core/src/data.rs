//! Observational datasets: covariates, binary actions, outcomes and a per-row
//! source tag separating factual observations from elicited answers.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A binary treatment decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Action {
    Control,
    Treated,
}

impl Action {
    pub const BOTH: [Action; 2] = [Action::Control, Action::Treated];

    pub fn index(self) -> usize {
        match self {
            Action::Control => 0,
            Action::Treated => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.index() as f64
    }

    pub fn other(self) -> Action {
        match self {
            Action::Control => Action::Treated,
            Action::Treated => Action::Control,
        }
    }

    pub fn from_bit(bit: bool) -> Action {
        if bit {
            Action::Treated
        } else {
            Action::Control
        }
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a.index() as u8
    }
}

impl TryFrom<u8> for Action {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Action::Control),
            1 => Ok(Action::Treated),
            other => Err(format!("action must be 0 or 1, got {other}")),
        }
    }
}

/// Where a row came from: the original observational data or an oracle answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Factual,
    Elicited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// One observation `(x, a, y)` with its source tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub x: Vec<f64>,
    pub action: Action,
    pub y: f64,
    pub source: Source,
}

/// Column-oriented dataset. All columns have the same length and every
/// covariate vector has the same dimension.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    units: Vec<Vec<f64>>,
    actions: Vec<Action>,
    outcomes: Vec<f64>,
    source: Vec<Source>,
}

impl Dataset {
    pub fn new(
        units: Vec<Vec<f64>>,
        actions: Vec<Action>,
        outcomes: Vec<f64>,
        source: Vec<Source>,
    ) -> Result<Self> {
        let n = units.len();
        if actions.len() != n || outcomes.len() != n || source.len() != n {
            return Err(invalid(format!(
                "column lengths differ: units {n}, actions {}, outcomes {}, source {}",
                actions.len(),
                outcomes.len(),
                source.len()
            )));
        }
        if let Some(first) = units.first() {
            let d = first.len();
            if d == 0 {
                return Err(invalid("covariate dimension must be at least 1"));
            }
            if let Some(bad) = units.iter().position(|u| u.len() != d) {
                return Err(invalid(format!(
                    "row {bad} has dimension {}, expected {d}",
                    units[bad].len()
                )));
            }
        }
        Ok(Self {
            units,
            actions,
            outcomes,
            source,
        })
    }

    /// All rows tagged factual.
    pub fn factual(units: Vec<Vec<f64>>, actions: Vec<Action>, outcomes: Vec<f64>) -> Result<Self> {
        let source = vec![Source::Factual; units.len()];
        Self::new(units, actions, outcomes, source)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Covariate dimension, `None` while the dataset is empty.
    pub fn dim(&self) -> Option<usize> {
        self.units.first().map(Vec::len)
    }

    pub fn units(&self) -> &[Vec<f64>] {
        &self.units
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn sources(&self) -> &[Source] {
        &self.source
    }

    pub fn row(&self, i: usize) -> Row {
        Row {
            x: self.units[i].clone(),
            action: self.actions[i],
            y: self.outcomes[i],
            source: self.source[i],
        }
    }

    pub fn push(&mut self, row: Row) -> Result<()> {
        if let Some(d) = self.dim() {
            if row.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.x.len(),
                });
            }
        } else if row.x.is_empty() {
            return Err(invalid("covariate dimension must be at least 1"));
        }
        self.units.push(row.x);
        self.actions.push(row.action);
        self.outcomes.push(row.y);
        self.source.push(row.source);
        Ok(())
    }

    /// Indices of rows that received `action`.
    pub fn indices_for(&self, action: Action) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.actions[i] == action).collect()
    }

    pub fn count_for(&self, action: Action) -> usize {
        self.actions.iter().filter(|&&a| a == action).count()
    }

    /// Covariates of rows that received `action`.
    pub fn covariates_for(&self, action: Action) -> Vec<Vec<f64>> {
        self.indices_for(action)
            .into_iter()
            .map(|i| self.units[i].clone())
            .collect()
    }

    pub fn is_binary(&self) -> bool {
        self.outcomes.iter().all(|&y| y == 0.0 || y == 1.0)
    }

    pub fn validate_binary(&self) -> Result<()> {
        match self.outcomes.iter().position(|&y| y != 0.0 && y != 1.0) {
            Some(i) => Err(invalid(format!(
                "row {i} has outcome {} but binary outcomes must be 0 or 1",
                self.outcomes[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            units: indices.iter().map(|&i| self.units[i].clone()).collect(),
            actions: indices.iter().map(|&i| self.actions[i]).collect(),
            outcomes: indices.iter().map(|&i| self.outcomes[i]).collect(),
            source: indices.iter().map(|&i| self.source[i]).collect(),
        }
    }
}
