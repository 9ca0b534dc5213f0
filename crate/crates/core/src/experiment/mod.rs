//! Experiment orchestration behind the command-line interface.
//!
//! Every runner is deterministic in `(spec, seed)`: each independent run draws
//! from its own random stream and results are assembled by index, so
//! `rows.csv` does not depend on the worker count.

mod report;
mod runners;
mod spec;
mod stats;

pub use report::{format_float, Cell, Check, CheckStatus, Metadata, Report, Summary};
pub use runners::{
    run_bounds, run_optimize, run_tl_comparison, run_validate_theorem1, run_waiting_time_sweep,
};
pub use spec::{ExperimentKind, ExperimentSpec, ProfileSource};
pub use stats::{quantile, spearman};

use crate::error::{Error, Result};

/// Runs `spec` on a thread pool sized by `spec.workers`.
pub fn run(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = spec.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    pool.install(|| match spec.kind {
        ExperimentKind::ValidateTheorem1 => run_validate_theorem1(spec),
        ExperimentKind::WaitingTimeSweep => run_waiting_time_sweep(spec),
        ExperimentKind::TlComparison => run_tl_comparison(spec),
        ExperimentKind::Optimize => run_optimize(spec),
        ExperimentKind::Bounds => run_bounds(spec),
    })
}
