//! Seeded experiments: evaluation protocol, metric aggregation, sweeps,
//! coverage snapshots and plots.

mod config;
mod coverage;
mod eval;
mod metrics;
mod plot;
mod run;
mod sweep;

pub use config::{
    env_defaults, parse_config_text, parse_seeds, resolve_output, ConfigError, EnvDefaults, ExperimentConfig,
    LearnerKind, DEFAULT_SEEDS, KEYS, OUTPUT_ROOT_VAR,
};
pub use coverage::{
    coverage_svg, export_coverage, read_coverage_csv, write_coverage_rows, CoverageGrid, COVERAGE_HEADER,
};
pub use eval::{evaluate, EvalReport};
pub use metrics::{
    aggregate, auc, mean_se, read_aggregate_csv, write_aggregate_csv, write_seed_csv, AggregateRow, AGGREGATE_HEADER,
    SEED_HEADER,
};
pub use plot::{curves_svg, Curve, PlotError};
pub use run::{run_experiment, run_seed, run_seeds, seed_rngs, HarnessError, RunSummary, SeedRun};
pub use sweep::{sweep, sweep_point, SweepSummary, ABLATIONS, ABLATION_KEY, COMPARISON_HEADER};
