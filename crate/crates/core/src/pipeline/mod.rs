//! End-to-end experiment runner: data, selector training, preference
//! generation, DPO and evaluation, with per-stage checkpoints in one output
//! directory.

mod config;
mod run;

pub use config::{
    Algorithm, DataSource, EvalSettings, ExperimentConfig, IngestSpec, PartitionSpec, RlftSettings, SelectorSettings, PRESETS,
};
pub use run::{
    files, merge_clients, read_generated, run_pipeline, write_atomic, Federation, Pipeline, PipelineSummary, RlftInputs, Stage,
    TrainedSelectors, TrainingSummary,
};
