//! Uniform view over the fitted potential-outcome models used by the
//! elicitation loop: Gaussian-family models (GP, BLR) answered with real
//! values and Laplace logistic models answered with bits or comparisons.

use serde::{Deserialize, Serialize};

use crate::data::{Action, Dataset, OutcomeKind, Source};
use crate::error::{invalid, Result};
use crate::models::blr::{blr_fit, blr_latent, blr_latent_cov};
use crate::models::gp::{fit_rows, arm_rows};
use crate::models::logistic::{ComparisonLikelihood, LatentPair, LogisticModel};
use crate::models::{
    ite_predictive, BasisConfig, BlrConfig, ComparativeAnswer, GaussianPredictive, GpFitOptions, GpModel,
    HyperPrior, WeightPosterior,
};
use crate::reliability::{estimate_type_s_draws, estimate_type_s_gaussian, DecisionOrientation, TypeSEstimate};

pub const DEFAULT_DRAWS: usize = 2000;
pub const DEFAULT_LOGISTIC_PRIOR_VARIANCE: f64 = 4.0;

/// How to (re)fit a model from data. Stored in the pool state so that
/// answers trigger the same kind of fit as the initial one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Gp {
        #[serde(default)]
        prior: HyperPrior,
        #[serde(default)]
        fit: GpFitOptions,
    },
    Blr {
        basis: BasisConfig,
        cfg: BlrConfig,
    },
    Logistic {
        basis: BasisConfig,
        prior_variance: f64,
        #[serde(default = "default_draws")]
        n_draws: usize,
        #[serde(default)]
        draw_seed: u64,
    },
    Comparative {
        basis: BasisConfig,
        prior_variance: f64,
        noise_scale: f64,
        #[serde(default = "default_draws")]
        n_draws: usize,
        #[serde(default)]
        draw_seed: u64,
    },
}

fn default_draws() -> usize {
    DEFAULT_DRAWS
}

impl ModelSpec {
    pub fn gp_default() -> Self {
        ModelSpec::Gp {
            prior: HyperPrior::default(),
            fit: GpFitOptions::default(),
        }
    }

    pub fn logistic_default() -> Self {
        ModelSpec::Logistic {
            basis: BasisConfig::three_rbf(),
            prior_variance: DEFAULT_LOGISTIC_PRIOR_VARIANCE,
            n_draws: DEFAULT_DRAWS,
            draw_seed: 0,
        }
    }

    pub fn comparative_default() -> Self {
        ModelSpec::Comparative {
            basis: BasisConfig::three_rbf(),
            prior_variance: DEFAULT_LOGISTIC_PRIOR_VARIANCE,
            noise_scale: ComparisonLikelihood::DEFAULT_NOISE_SCALE,
            n_draws: DEFAULT_DRAWS,
            draw_seed: 0,
        }
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        match self {
            ModelSpec::Gp { .. } | ModelSpec::Blr { .. } => OutcomeKind::Continuous,
            _ => OutcomeKind::Binary,
        }
    }

    pub fn fit(
        &self,
        data: &Dataset,
        comparisons: &[ComparativeAnswer],
        orient: DecisionOrientation,
        seed: u64,
    ) -> Result<FittedModel> {
        match self {
            ModelSpec::Gp { prior, fit } => {
                let dim = data
                    .dim()
                    .ok_or_else(|| invalid("cannot fit a GP to an empty dataset"))?;
                let arm = |a: Action, s: u64| {
                    let (x, y, src) = arm_rows(data, a);
                    fit_rows(x, y, src, dim, prior, s, fit)
                };
                let a0 = arm(Action::Control, seed)?;
                let a1 = arm(Action::Treated, seed.wrapping_add(0x9E37_79B9))?;
                Ok(FittedModel::Gp { arms: [a0, a1] })
            }
            ModelSpec::Blr { basis, cfg } => Ok(FittedModel::Blr {
                arms: [
                    blr_fit(data, Action::Control, basis, cfg)?,
                    blr_fit(data, Action::Treated, basis, cfg)?,
                ],
                basis: basis.clone(),
                cfg: *cfg,
            }),
            ModelSpec::Logistic {
                basis,
                prior_variance,
                n_draws,
                draw_seed,
            } => Ok(FittedModel::Logistic {
                model: LogisticModel::fit(data, basis, *prior_variance)?,
                n_draws: *n_draws,
                draw_seed: *draw_seed,
            }),
            ModelSpec::Comparative {
                basis,
                prior_variance,
                noise_scale,
                n_draws,
                draw_seed,
            } => {
                let cmp = ComparisonLikelihood {
                    noise_scale: *noise_scale,
                    orientation: orient,
                };
                Ok(FittedModel::Logistic {
                    model: LogisticModel::fit_with_comparisons(data, comparisons, basis, *prior_variance, Some(cmp))?,
                    n_draws: *n_draws,
                    draw_seed: *draw_seed,
                })
            }
        }
    }
}

/// Bivariate Gaussian over the two arms at one unit: `[control, treated]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPredictive {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl JointPredictive {
    pub fn independent(p0: GaussianPredictive, p1: GaussianPredictive) -> Self {
        Self {
            mean: [p0.mean, p1.mean],
            cov: [[p0.variance, 0.0], [0.0, p1.variance]],
        }
    }

    pub fn arm(&self, a: Action) -> GaussianPredictive {
        let i = a.index();
        GaussianPredictive::new(self.mean[i], self.cov[i][i])
    }
}

impl From<LatentPair> for JointPredictive {
    fn from(p: LatentPair) -> Self {
        Self {
            mean: p.mean,
            cov: p.cov,
        }
    }
}

/// KL divergence `KL(p || q)` between bivariate Gaussians. Zero-variance
/// dimensions that agree exactly are skipped.
pub fn kl_joint(p: &JointPredictive, q: &JointPredictive) -> f64 {
    let det_q = q.cov[0][0] * q.cov[1][1] - q.cov[0][1] * q.cov[1][0];
    let det_p = p.cov[0][0] * p.cov[1][1] - p.cov[0][1] * p.cov[1][0];
    if q.cov[0][1] == 0.0 && p.cov[0][1] == 0.0 {
        return (0..2)
            .map(|i| kl_univariate(p.mean[i], p.cov[i][i], q.mean[i], q.cov[i][i]))
            .sum();
    }
    let inv = [
        [q.cov[1][1] / det_q, -q.cov[0][1] / det_q],
        [-q.cov[1][0] / det_q, q.cov[0][0] / det_q],
    ];
    let mut tr = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            tr += inv[i][j] * p.cov[j][i];
        }
    }
    let d = [q.mean[0] - p.mean[0], q.mean[1] - p.mean[1]];
    let mut quad = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            quad += d[i] * inv[i][j] * d[j];
        }
    }
    (0.5 * (tr + quad - 2.0 + (det_q / det_p).ln())).max(0.0)
}

pub fn kl_univariate(mp: f64, vp: f64, mq: f64, vq: f64) -> f64 {
    if vp == vq && mp == mq {
        return 0.0;
    }
    (0.5 * ((vp + (mp - mq).powi(2)) / vq - 1.0 + (vq / vp).ln())).max(0.0)
}

#[derive(Debug, Clone)]
pub enum FittedModel {
    Gp {
        arms: [GpModel; 2],
    },
    Blr {
        arms: [WeightPosterior; 2],
        basis: BasisConfig,
        cfg: BlrConfig,
    },
    Logistic {
        model: LogisticModel,
        n_draws: usize,
        draw_seed: u64,
    },
}

impl FittedModel {
    pub fn outcome_kind(&self) -> OutcomeKind {
        match self {
            FittedModel::Gp { .. } | FittedModel::Blr { .. } => OutcomeKind::Continuous,
            FittedModel::Logistic { .. } => OutcomeKind::Binary,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        self.outcome_kind() == OutcomeKind::Continuous
    }

    /// Posterior mean and variance of the noise-free outcome surface.
    pub fn latent(&self, x: &[f64], a: Action) -> Result<(f64, f64)> {
        match self {
            FittedModel::Gp { arms } => arms[a.index()].latent(x),
            FittedModel::Blr { arms, basis, .. } => Ok(blr_latent(&arms[a.index()], basis, x, a)),
            FittedModel::Logistic { model, .. } => {
                let j = model.latent_joint(x);
                Ok((j.mean[a.index()], j.cov[a.index()][a.index()]))
            }
        }
    }

    /// Latent posterior covariance between two inputs on one arm.
    pub fn latent_cov(&self, x: &[f64], x2: &[f64], a: Action) -> Result<f64> {
        match self {
            FittedModel::Gp { arms } => arms[a.index()].latent_cov(x, x2),
            FittedModel::Blr { arms, basis, .. } => Ok(blr_latent_cov(&arms[a.index()], basis, x, x2, a)),
            FittedModel::Logistic { .. } => Err(invalid("latent_cov is defined for Gaussian-family models")),
        }
    }

    /// Observation noise variance of factual rows.
    pub fn factual_noise(&self, a: Action) -> f64 {
        match self {
            FittedModel::Gp { arms } => arms[a.index()].hyperparams().noise_factual,
            FittedModel::Blr { cfg, .. } => cfg.noise_variance,
            FittedModel::Logistic { .. } => 0.0,
        }
    }

    /// Observation noise variance of elicited answers.
    pub fn elicited_noise(&self, a: Action) -> f64 {
        match self {
            FittedModel::Gp { arms } => arms[a.index()].hyperparams().noise_elicited,
            FittedModel::Blr { cfg, .. } => cfg.noise_variance,
            FittedModel::Logistic { .. } => 0.0,
        }
    }

    /// Predictive of a factual outcome. For the logistic model this is the
    /// moment-matched Gaussian of `theta` under the posterior draws.
    pub fn predictive(&self, x: &[f64], a: Action) -> Result<GaussianPredictive> {
        match self {
            FittedModel::Logistic {
                model,
                n_draws,
                draw_seed,
            } => {
                let (t0, t1) = model.theta_pair_draws(x, *n_draws, *draw_seed);
                let d = if a == Action::Treated { t1 } else { t0 };
                let n = d.len() as f64;
                let m = d.iter().sum::<f64>() / n;
                let v = d.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                Ok(GaussianPredictive::new(m, v))
            }
            _ => {
                let (m, v) = self.latent(x, a)?;
                Ok(GaussianPredictive::new(m, v + self.factual_noise(a)))
            }
        }
    }

    /// Joint predictive over both arms used by the KL-based criteria:
    /// factual predictives for Gaussian models, latent logits for logistic.
    pub fn joint(&self, x: &[f64]) -> Result<JointPredictive> {
        match self {
            FittedModel::Logistic { model, .. } => Ok(model.latent_joint(x).into()),
            _ => Ok(JointPredictive::independent(
                self.predictive(x, Action::Control)?,
                self.predictive(x, Action::Treated)?,
            )),
        }
    }

    /// Estimated Type S error from a joint predictive of this model family.
    pub fn type_s_from_joint(&self, joint: &JointPredictive, orient: DecisionOrientation) -> Result<TypeSEstimate> {
        match self {
            FittedModel::Logistic { n_draws, draw_seed, .. } => {
                let pair = LatentPair {
                    mean: joint.mean,
                    cov: joint.cov,
                };
                let (t0, t1) = pair.theta_draws(*n_draws, *draw_seed);
                estimate_type_s_draws(&t1, &t0, orient)
            }
            _ => {
                let tau = ite_predictive(joint.arm(Action::Treated), joint.arm(Action::Control));
                estimate_type_s_gaussian(&tau, orient)
            }
        }
    }

    pub fn type_s(&self, x: &[f64], orient: DecisionOrientation) -> Result<TypeSEstimate> {
        self.type_s_from_joint(&self.joint(x)?, orient)
    }

    /// Posterior-mean success probability at `(x, a)` (logistic only).
    pub fn mean_theta(&self, x: &[f64], a: Action) -> Option<f64> {
        match self {
            FittedModel::Logistic {
                model,
                n_draws,
                draw_seed,
            } => Some(model.mean_theta(x, a, *n_draws, *draw_seed)),
            _ => None,
        }
    }

    /// Model probability that a comparison at `x` returns `c = 1`.
    pub fn prob_comparison_one(&self, x: &[f64], cmp: ComparisonLikelihood) -> Option<f64> {
        match self {
            FittedModel::Logistic {
                model,
                n_draws,
                draw_seed,
            } => {
                let (t0, t1) = model.theta_pair_draws(x, *n_draws, *draw_seed);
                let s: f64 = t0.iter().zip(&t1).map(|(a, b)| cmp.prob_one(*b, *a)).sum();
                Some(s / t0.len() as f64)
            }
            _ => None,
        }
    }

    /// Squared distance used by the nearest-neighbour pool filter: the
    /// fitted ARD metric of the arm for GPs, the basis length-scale otherwise.
    pub fn scaled_sqdist(&self, x: &[f64], x2: &[f64], a: Action) -> f64 {
        let euclid = |l: f64| x.iter().zip(x2).map(|(u, v)| ((u - v) / l).powi(2)).sum::<f64>();
        match self {
            FittedModel::Gp { arms } => arms[a.index()].scaled_sqdist(x, x2),
            FittedModel::Blr { basis, .. } => euclid(basis.lengthscale),
            FittedModel::Logistic { model, .. } => euclid(model.basis().lengthscale),
        }
    }

    /// Same model with one more observation and hyperparameters unchanged.
    pub fn with_observation(&self, x: &[f64], a: Action, y: f64) -> Result<FittedModel> {
        match self {
            FittedModel::Gp { arms } => {
                let mut arms = arms.clone();
                arms[a.index()] = arms[a.index()].with_observation(x.to_vec(), y, Source::Elicited)?;
                Ok(FittedModel::Gp { arms })
            }
            FittedModel::Blr { arms, basis, cfg } => {
                // rebuild from the cached sufficient statistics
                let mut arms = arms.clone();
                let post = &arms[a.index()];
                let phi = basis.features(x, a);
                let p = phi.len();
                let mut ptp = post.phi_t_phi.clone();
                let mut pty = post.phi_t_y.clone();
                for i in 0..p {
                    pty[i] += phi[i] * y;
                    for j in 0..p {
                        ptp[i][j] += phi[i] * phi[j];
                    }
                }
                arms[a.index()] = crate::models::blr::posterior_from_stats(ptp, pty, cfg)?;
                Ok(FittedModel::Blr {
                    arms,
                    basis: basis.clone(),
                    cfg: *cfg,
                })
            }
            FittedModel::Logistic {
                model,
                n_draws,
                draw_seed,
            } => Ok(FittedModel::Logistic {
                model: model.with_row(x.to_vec(), a, y)?,
                n_draws: *n_draws,
                draw_seed: *draw_seed,
            }),
        }
    }

    pub fn with_comparison(&self, x: &[f64], c: bool, cmp: ComparisonLikelihood) -> Result<FittedModel> {
        match self {
            FittedModel::Logistic {
                model,
                n_draws,
                draw_seed,
            } => Ok(FittedModel::Logistic {
                model: model.with_comparison(x.to_vec(), c, cmp)?,
                n_draws: *n_draws,
                draw_seed: *draw_seed,
            }),
            _ => Err(invalid("comparative answers need a comparative model")),
        }
    }

    /// Refit to `data` reusing current hyperparameters (GP) instead of
    /// re-optimising them.
    pub fn refit_frozen(
        &self,
        spec: &ModelSpec,
        data: &Dataset,
        comparisons: &[ComparativeAnswer],
        orient: DecisionOrientation,
        seed: u64,
    ) -> Result<FittedModel> {
        match self {
            FittedModel::Gp { arms } => Ok(FittedModel::Gp {
                arms: [
                    GpModel::condition_on(data, Action::Control, arms[0].hyperparams().clone())?,
                    GpModel::condition_on(data, Action::Treated, arms[1].hyperparams().clone())?,
                ],
            }),
            _ => spec.fit(data, comparisons, orient, seed),
        }
    }

    /// Stable hash of the model's parameters, for detecting mutation.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        let mut put = |v: f64| v.to_bits().hash(&mut h);
        match self {
            FittedModel::Gp { arms } => {
                for arm in arms {
                    arm.hyperparams().to_log().into_iter().for_each(&mut put);
                    arm.targets().iter().copied().for_each(&mut put);
                    arm.inputs().iter().flatten().copied().for_each(&mut put);
                }
            }
            FittedModel::Blr { arms, .. } => {
                for arm in arms {
                    arm.mean.iter().copied().for_each(&mut put);
                    arm.covariance.iter().flatten().copied().for_each(&mut put);
                }
            }
            FittedModel::Logistic { model, .. } => {
                let p = model.posterior();
                p.map_mean.iter().copied().for_each(&mut put);
                p.covariance.iter().flatten().copied().for_each(&mut put);
            }
        }
        h.finish()
    }
}
