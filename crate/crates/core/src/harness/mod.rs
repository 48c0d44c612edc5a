//! Problem files, model evaluation, estimator runs and result files.

mod config;
mod estimate;
mod evaluator;
mod output;
mod suite;

pub use config::{
    load_problem, pilot_store, CommandConfig, Constraints, CovarianceSource, EvaluatorConfig, GroupConfig,
    ModeConfig, ModelConfig, ParetoConfig, PilotConfig, Problem, ProblemConfig, SampleCap, DEFAULT_REPLICATIONS,
};
pub use estimate::{
    draw_pilot, efficiency_report, run_estimate, simulate_baseline, summarize, EstimateReport, RunOptions,
};
pub use evaluator::{
    parse_reply, parse_request, serve, CommandEvaluator, Evaluator, Reply, Request, SyntheticEvaluator,
};
pub use output::{
    emit_outputs, write_frontier_csv, write_output, BenchmarkReport, BenchmarkRow, Format, Output,
    FRONTIER_HEADER,
};
pub use suite::{Domain, StreamKey, SyntheticSuite};
