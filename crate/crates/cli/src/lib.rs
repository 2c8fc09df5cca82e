//! Stage runners and the cached end-to-end pipeline behind the `tbasic`
//! binary.

pub mod cache;
pub mod config;
pub mod failure;
pub mod pipeline;
pub mod stages;
pub mod timefmt;

pub use config::PipelineConfig;
pub use failure::{Failure, Outcome};
pub use pipeline::{run_pipeline, EvaluationSummary, PipelineRun};
