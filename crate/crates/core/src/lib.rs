//! Adam-type stochastic bilevel optimization.
//!
//! The crate is organised bottom-up: [`oracle`] defines the stochastic query
//! contract, [`hypergradient`] builds Neumann-series estimates on top of it,
//! [`adambo`] and [`vr_adambo`] are the optimizers, [`baselines`] holds two
//! control methods, [`problems`] ships concrete instances and [`harness`]
//! drives experiments from plain-text configs.

pub mod adambo;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod hypergradient;
pub mod linalg;
pub mod oracle;
pub mod problems;
pub mod sampling;
pub mod trace;
pub mod vr_adambo;

pub use error::{Error, Result};
pub use hypergradient::{
    estimate_hypergradient, exact_neumann_expectation, neumann_apply, neumann_bias_bound,
    HypergradSample, NeumannConfig,
};
pub use linalg::{Matrix, Vector};
pub use oracle::{
    finite_difference_gradient, oracle_selfcheck, phi_smoothness, AucScores, BilevelOracle,
    CheckReport, PhiSmoothness, ProblemConstants, QuantityCheck, UpperSmoothness,
};
pub use adambo::{
    adambo_step, adambo_step_rescaled, alpha_schedule, run_adambo, sgd_warm_start,
    theorem_schedule, AdamBOConfig, AdamBOState, RescaledState, Schedule, ScheduleInputs,
    UpdateForm,
};
pub use baselines::{run_masoba_like, run_stocbio_like, BaselineConfig};
pub use trace::{MetricsConfig, Monitor, Trace, TraceRecord};
pub use vr_adambo::{
    run_vr_adambo, snag_run, storm_update, vr_adambo_step, vr_init, VRAdamBOConfig, VRAdamBOState,
};
pub use sampling::{KeyStream, RunStreams, SampleKey, StreamRole};
