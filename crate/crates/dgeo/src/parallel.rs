//! Replication-level parallelism for simulations.

use crate::error::{CliError, Result};
use dgeo_core::lln::{assemble, prepare, run_rep, SimConfig, SimReport};
use rayon::prelude::*;

/// [`dgeo_core::lln::run_lln`] with replications spread over `workers`
/// threads; the report is bit-identical for every worker count.
pub fn run_lln_parallel(cfg: &SimConfig, workers: usize) -> Result<SimReport> {
    let prep = prepare(cfg)?;
    let traces = if workers <= 1 {
        (0..cfg.reps).map(|r| run_rep(&prep, r)).collect::<dgeo_core::Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Argument(format!("thread pool: {e}")))?;
        pool.install(|| (0..cfg.reps).into_par_iter().map(|r| run_rep(&prep, r)).collect::<dgeo_core::Result<Vec<_>>>())?
    };
    log::info!("{} replications on {} worker(s)", cfg.reps, workers.max(1));
    Ok(assemble(&prep, traces)?)
}
