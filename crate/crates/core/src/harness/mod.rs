//! Closed-loop Monte Carlo study: simulation, metrics, configuration and
//! output files.

mod closed_loop;
pub mod config;
mod metrics;
mod output;
mod study;

pub use closed_loop::{monte_carlo, run_closed_loop, LoopSettings, TrajectoryRow};
pub use config::{keys_help, DataSettings, Paths, RunConfig, KEYS};
pub use metrics::{compute_metrics, MetricsBlock, MetricsReport, SolverStats, CA50_HIGH, CA50_LOW};
pub use output::{
    cycle_bands, emit_plot, read_json, read_metrics_json, read_trajectory_csv, read_trajectory_meta, write_json,
    write_metrics_json, write_trajectory_csv, ComparisonDocument, FitDocument, MetricsDocument, TrajectoryMeta,
    TRAJECTORY_HEADER,
};
pub use study::{loop_settings, simulate, StudyInputs};
