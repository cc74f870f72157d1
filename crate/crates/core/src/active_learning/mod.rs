//! Decision-making aware active learning: lookahead criteria, baselines,
//! nearest-neighbour pool filtering and elicitation bookkeeping.

pub mod model;
pub mod pool;
pub mod quadrature;
pub mod scoring;

pub use model::{kl_joint, FittedModel, JointPredictive, ModelSpec};
pub use pool::{apply_answer, mix_seed, Answer, LookaheadSettings, PoolState, Query, QueryKind};
pub use quadrature::{gauss_hermite_expect, QuadratureRule};
pub use scoring::{
    knn_filter, lookahead_type_s, score, score_dm_aware, score_dm_aware_explore, score_eig, score_eig_at,
    score_targeted_ig, score_uncertainty, select_query, AcquisitionScore, Criterion, KnnConfig,
};
