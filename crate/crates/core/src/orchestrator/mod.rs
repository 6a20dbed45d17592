//! Search loops (SEKI and two baselines), run traces, replay, ablation
//! sweeps and summary reports.
//!
//! A SEKI run evaluates a random initial architecture (iteration 0), then
//! spends `lambda` self-evolution iterations refining one architecture at a
//! time through a strategy prompt (C) and an apply prompt (D), then `gamma`
//! knowledge-inspiration iterations that show the model `xi` exemplars drawn
//! from the repository's top `k` (prompt E). Every iteration evaluates exactly
//! one architecture.

mod config;
mod replay;
mod report;
mod search;
mod sweep;
mod trace;

use thiserror::Error;

use crate::evaluator::EvalError;
use crate::llm::LlmError;
use crate::prompt::PromptError;

pub use config::{AnchorMode, Method, SearchConfig};
pub use replay::{replay, replay_trace, ReplayReport};
pub use report::{build_report, mean_std, method_label, report_from_paths, write_report_csv, ReportRow};
pub use search::{
    build_backend, build_components, run, run_mutation_baseline, run_random_baseline, run_seki, run_with, SearchRun,
};
pub use sweep::{ablation_sweep, write_sweep_csv, Ratio, SweepGrid, SweepRow, XiAxis};
pub use trace::{
    FinalRecord, IterationRecord, Meta, ParseOutcome, SearchTrace, Stage, TraceError, TraceEvent, TraceHeader,
    TRACE_FORMAT,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot build evaluator: {0}")]
    Setup(#[source] EvalError),
    #[error("evaluation failed at iteration {iteration} for {arch}: {source}")]
    Evaluation {
        iteration: u32,
        arch: String,
        #[source]
        source: EvalError,
    },
    #[error("language model failed at iteration {iteration}: {source}")]
    Llm {
        iteration: u32,
        #[source]
        source: LlmError,
    },
    #[error("cannot build backend: {0}")]
    Backend(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("trace is not replayable: {0}")]
    NotReplayable(String),
    #[error("replay diverged at {} in field `{field}`", iteration.map_or("the config record".to_string(), |i| format!("iteration {i}")))]
    DivergenceAt { iteration: Option<u32>, field: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl SearchError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            SearchError::Config(_) => "config",
            SearchError::Setup(_) | SearchError::Evaluation { .. } => "oracle",
            SearchError::Llm { .. } | SearchError::Backend(_) => "backend",
            SearchError::Prompt(_) => "prompt",
            SearchError::Trace(_) => "trace",
            SearchError::NotReplayable(_) => "not_replayable",
            SearchError::DivergenceAt { .. } => "divergence",
            SearchError::Io(_) => "io",
        }
    }
}
