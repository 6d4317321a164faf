//! Ground-truth errors, correlation statistics, experiment orchestration and reports.

mod experiment;
mod report;
mod stats;
mod suite;

pub use experiment::{ground_truth_error, run_experiment, ExperimentConfig, RetrainOptions, ScoreSelection};
pub use report::{summary_table, Report, ReportRow, ScoreSummary, Scores, HEADER, SCORES};
pub use stats::{average_ranks, pearson, r_squared, spearman};
pub use suite::{load_suite, save_suite, SuiteEntry, MANIFEST};
