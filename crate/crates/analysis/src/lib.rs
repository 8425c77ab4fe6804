//! Statistics over model evaluations and human responses: RT z-scoring,
//! condition summaries with Wilson intervals, correlations and t-tests,
//! written out as CSV.

pub mod output;
pub mod stats;
pub mod summary;
pub mod synthetic;
pub mod zscore;

pub use output::{write_outputs, RunInfo};
pub use stats::{pearson, ttest, wilson_ci, CorrelationResult, StatsError, TTest};
pub use summary::{
    build_summaries, Analysis, AnalysisConfig, AnalysisError, ConditionSummary, CorrelationRow,
    HumanResponse,
};
pub use zscore::{zscore_rt, RtRecord, ZRecord, ZScores};
