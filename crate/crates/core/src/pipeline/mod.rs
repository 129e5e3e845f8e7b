//! CSV ingestion, the per-stream online loop running every strategy in
//! lockstep, the run ledger and report emission.

mod config;
mod ingest;
mod ledger;
mod reports;
mod run;

use std::path::PathBuf;

pub use config::{KalmanConfig, RosterConfig, RunConfig, StrategyToggles, WakeConfig};
pub use ingest::{attach_run_variances, ingest_csv, Stream, StreamKey, FIXED_COLUMNS};
pub use ledger::{LedgerRow, Outcome, RunLedger, Strategy};
pub use reports::{
    classifier_confusion, compute_reports, emit_reports, AuditRow, DiffQ95, PooledScore, Reports, StrategyScore,
};
pub use run::{run_all, run_stream, run_stream_with_stats, training_samples, RunStats};

use crate::error::Result;

/// Ingest, run every stream and write all reports.
pub fn execute(cfg: &RunConfig) -> Result<(Vec<RunLedger>, Vec<PathBuf>)> {
    cfg.validate()?;
    let streams = ingest_csv(&cfg.input_path)?;
    log::info!("{} streams from {}", streams.len(), cfg.input_path.display());
    let runs = run_all(cfg, &streams)?;
    let ledgers: Vec<RunLedger> = runs.into_iter().map(|(l, _)| l).collect();
    let files = emit_reports(&ledgers, cfg.wake.activation_round, &cfg.output_dir)?;
    Ok((ledgers, files))
}
