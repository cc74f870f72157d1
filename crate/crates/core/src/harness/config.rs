use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::DEFAULT_RESAMPLES;
use crate::active_learning::{Criterion, LookaheadSettings, ModelSpec};
use crate::datagen::{BernoulliRbfConfig, SigmoidGenConfig, StandinConfig, TabularSchema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Correlation,
    AlBinary,
    AlContinuous,
    AlComparative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub n_models: usize,
    pub propensities: Vec<f64>,
    /// One full sweep per training-set size.
    pub n_train: Vec<usize>,
    pub n_test: usize,
    pub noise_sd: f64,
    pub effect_variance: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            n_models: 50,
            propensities: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            n_train: vec![50],
            n_test: 500,
            noise_sd: 0.5,
            effect_variance: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContinuousSource {
    #[default]
    Sigmoid,
    Standin,
    Tabular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSource {
    pub path: PathBuf,
    pub schema: TabularSchema,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuousConfig {
    pub source: ContinuousSource,
    pub sigmoid: SigmoidGenConfig,
    pub standin: StandinConfig,
    pub tabular: Option<TabularSource>,
    /// Training rows subsampled from tabular and stand-in data.
    pub n_train: usize,
    pub n_targets: usize,
}

impl Default for ContinuousConfig {
    fn default() -> Self {
        Self {
            source: ContinuousSource::Sigmoid,
            sigmoid: SigmoidGenConfig {
                propensity: 0.1,
                ..Default::default()
            },
            standin: StandinConfig::default(),
            tabular: None,
            n_train: 100,
            n_targets: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSettings {
    /// Defaults to the generator's observation noise.
    pub point_noise_sd: Option<f64>,
    pub flip_probability: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            point_noise_sd: None,
            flip_probability: 0.1,
        }
    }
}

fn default_repetitions() -> usize {
    1
}

fn default_criteria() -> Vec<Criterion> {
    vec![Criterion::DmAware, Criterion::Uncertainty]
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub n_queries: usize,
    #[serde(default = "default_criteria")]
    pub criteria: Vec<Criterion>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub knn: Option<usize>,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub correlation: CorrelationConfig,
    #[serde(default)]
    pub binary: BernoulliRbfConfig,
    #[serde(default)]
    pub continuous: ContinuousConfig,
    #[serde(default)]
    pub oracle: OracleSettings,
    #[serde(default)]
    pub lookahead: LookaheadSettings,
    /// Overrides the default model family for the experiment kind.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    /// Adds a wall-time column; makes result tables run-dependent.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            repetitions: default_repetitions(),
            n_queries: 0,
            criteria: default_criteria(),
            seed: 0,
            out: None,
            knn: None,
            jobs: None,
            correlation: CorrelationConfig::default(),
            binary: BernoulliRbfConfig::default(),
            continuous: ContinuousConfig::default(),
            oracle: OracleSettings::default(),
            lookahead: LookaheadSettings::default(),
            model: None,
            bootstrap_resamples: DEFAULT_RESAMPLES,
            record_timing: false,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if self.kind != ExperimentKind::Correlation && self.criteria.is_empty() {
            return bad("at least one criterion is required");
        }
        if self.knn == Some(0) {
            return bad("knn must be at least 1");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1");
        }
        if self.bootstrap_resamples == 0 {
            return bad("bootstrap_resamples must be at least 1");
        }
        if !(0.0..0.5).contains(&self.oracle.flip_probability) {
            return bad("oracle.flip_probability must lie in [0, 0.5)");
        }
        if self.oracle.point_noise_sd.is_some_and(|s| !(s >= 0.0)) {
            return bad("oracle.point_noise_sd must be nonnegative");
        }
        let c = &self.correlation;
        if self.kind == ExperimentKind::Correlation
            && (c.n_models == 0 || c.propensities.is_empty() || c.n_train.is_empty() || c.n_test == 0)
        {
            return bad("correlation sweep must have models, propensities, sizes and test units");
        }
        if self.kind == ExperimentKind::AlContinuous && self.continuous.source == ContinuousSource::Tabular
            && self.continuous.tabular.is_none()
        {
            return bad("continuous.source = \"tabular\" needs a [continuous.tabular] section");
        }
        Ok(())
    }
}
