//! Model ranking, majority-vote ensembles and evaluation protocols.

mod eval;
mod logo;
mod stats;
mod vote;

pub use eval::{
    ensemble_size_sweep, evaluate, evaluate_model, rank_models, ranking_csv, sort_ranked, sweep_csv, Confusion,
    Decision, Ensemble, EvalReport, LabeledFeatures, RankedModel, MAX_MEMBERS,
};
pub use logo::{leave_one_group_out, logo_partitions, LogoConfig, LogoFold, LogoPartition, LogoResult};
pub use stats::{box_stats_row, boxplot_stats, BoxStats, BOX_STATS_HEADER};
pub use vote::{vote, TieBreaker};
