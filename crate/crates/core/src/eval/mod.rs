//! Benchmark protocol: rank and linear correlations, logistic
//! linearization and content-disjoint repeated splits.

mod benchmark;
mod correlation;
mod logistic;
mod split;

pub use benchmark::{
    evaluate, read_mos_csv, run_benchmark, write_mos_csv, BenchmarkConfig, BenchmarkReport,
    EvalReport, MetricSummary, MosRecord,
};
pub use correlation::{average_ranks, krocc, pearson, rmse, srocc, MIN_POINTS};
pub use logistic::{
    fit_logistic4, logistic, plcc_rmse, LogisticForm, LogisticParams, DIAMETER_TOLERANCE,
    MAX_ITERATIONS, MIN_FIT_POINTS,
};
pub use split::{derive_seed, make_splits, Split, SplitConfig, SplitPlan, MIN_CONTENTS};
