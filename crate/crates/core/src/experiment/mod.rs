//! Seeded trial batches, result files and cross-run summaries.

mod batch;
mod config;
mod summary;

use std::path::PathBuf;

use thiserror::Error;

use crate::channel::ChannelError;
use crate::graph::GraphError;
use crate::protocol::ProtocolError;
use crate::trace::TraceError;
use crate::verifier::VerifyError;

pub use batch::{
    aggregate, run_batch, run_trial, run_trials, run_trials_sequential, run_with_seed,
    write_outputs, Aggregate, BatchResult, FailedTrial, GoodSummary, MacSummary, TargetSummary,
    TrialOutcome, TrialResult, VerdictRow, SCHEMA_VERSION,
};
pub use config::{
    graph_seed, scheduler_seed, trial_seed, AdversarySelect, AdversarySpec, GraphSpec, OutputSpec,
    ProtocolKind, RunConfig,
};
pub use summary::{render_table, summarize, SummaryRow};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config field `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{}: schema version {found}, expected {expected}", path.display())]
    Schema {
        path: PathBuf,
        found: u64,
        expected: u32,
    },
    #[error("no result files given")]
    NoInputs,
}

impl ExperimentError {
    pub fn config(path: impl Into<String>, message: impl ToString) -> Self {
        ExperimentError::Config {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
