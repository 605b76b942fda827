//! Plain-text configs, experiment runs, sweeps, summaries and the property
//! diagnostics exposed by the command-line front end.

pub mod config;
pub mod diagnostics;
pub mod experiment;
pub mod summary;

pub use config::{parse_config, Algo, AucProblem, ExperimentConfig, ProblemConfig};
pub use diagnostics::{diagnostics_csv, run_diagnostics, DiagnosticLine, Suite};
pub use experiment::{
    build_oracle, run_experiment, run_single, run_sweep, ExperimentOutput, SweepOutput,
    THREADS_ENV,
};
pub use summary::{emit_plot_data, summarize, SummaryRow, SummaryTable, XAxis};
