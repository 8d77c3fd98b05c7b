//! Declarative experiment configs, the artifact cache, pipeline stages and
//! the end-to-end runner.
//!
//! [`run_experiment`] composes the same stage functions the CLI exposes one
//! by one, over a workspace directory, so stage-by-stage execution and the
//! monolithic run produce identical bytes.

mod cache;
mod config;
mod pipeline;
mod report;
mod stages;

pub use cache::{atomic_write, content_key, PipelineCache};
pub use config::{
    DatasetConfig, ExperimentConfig, LayerSettings, StreamSpec, SvmSettings, TemporalKind,
};
pub use pipeline::{
    encode_stream_clip, extract_clip_features, layer_config_for, preprocess_stream,
    stream_in_channels,
};
pub use report::{ColumnReport, ExperimentReport};
pub use stages::{
    dataset_splits, load_dataset, load_result, read_encoded, stage_classify, stage_encode,
    stage_extract, stage_fuse, stage_synth, stage_train, Column, StreamRole,
};

use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("stage {stage} failed: {detail}")]
    Stage { stage: String, detail: String },
    #[error("internal error: {0}")]
    Internal(String),
}

impl ExperimentError {
    /// Process exit code contract: 0 success, 1 usage, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) | Self::Stage { .. } => 2,
            Self::Internal(_) => 3,
        }
    }
}

/// Deterministic sub-seed for a labelled purpose (layer init, SVM, ...).
pub fn derive_seed(base: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Run the full two-stream experiment into `work_dir`: encode both streams,
/// then per run train, extract, fuse and classify, and render the report.
pub fn run_experiment(
    config: &ExperimentConfig,
    work_dir: &Path,
) -> Result<ExperimentReport, ExperimentError> {
    let mut cache = PipelineCache::new(work_dir)?;
    run_experiment_with_cache(config, &mut cache)
}

/// [`run_experiment`] against an existing cache, exposing hit/miss counters.
pub fn run_experiment_with_cache(
    config: &ExperimentConfig,
    cache: &mut PipelineCache,
) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    stages::stage_synth(config, cache)?;
    for role in [StreamRole::A, StreamRole::B] {
        stages::stage_encode(config, cache, role)?;
    }
    for run in 0..config.runs {
        for role in [StreamRole::A, StreamRole::B] {
            stages::stage_train(config, cache, role, run)?;
            stages::stage_extract(config, cache, role, run)?;
        }
        stages::stage_fuse(config, cache, run)?;
        for column in [
            Column::Stream(StreamRole::A),
            Column::Stream(StreamRole::B),
            Column::Fused,
        ] {
            stages::stage_classify(config, cache, column, run)?;
        }
    }
    stage_report(config, cache)
}

/// Assemble the report from cached per-run results and write `report.txt`.
pub fn stage_report(
    config: &ExperimentConfig,
    cache: &mut PipelineCache,
) -> Result<ExperimentReport, ExperimentError> {
    let report = report::assemble(config, cache)?;
    atomic_write(&cache.root().join("report.txt"), report.render().as_bytes())?;
    Ok(report)
}
