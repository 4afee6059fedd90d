use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown source class code {0} (not in the configured legend)")]
    UnknownSourceCode(u16),

    #[error("degenerate class weights: class {class} ({name}) has zero pixels, 1/w is undefined")]
    DegenerateWeights { class: usize, name: String },

    #[error("class id {0} out of range (expected 0..6)")]
    ClassOutOfRange(u16),

    #[error("taxonomy config invalid: {0}")]
    Taxonomy(String),

    #[error("manifest invalid: {0}")]
    Manifest(String),

    #[error("region leakage: region {region:?} appears in both a train/validation record and a test record")]
    RegionLeakage { region: String },

    #[error("tile container invalid at {path}: {reason}")]
    TileFormat { path: PathBuf, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("network spec invalid: {0}")]
    NetSpec(String),

    #[error("width multiplier {m} yields non-integral channel count for base {base}")]
    NonIntegralChannels { m: f64, base: usize },

    #[error("loss input invalid: {0}")]
    Loss(String),

    #[error("non-finite loss at step {step} (batch index {batch_index}): {detail}")]
    NonFiniteLoss {
        step: u64,
        batch_index: usize,
        detail: String,
    },

    #[error("checkpoint invalid at {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("config invalid: {0}")]
    Config(String),

    #[error("empty split {0:?}: nothing to do")]
    EmptySplit(String),

    #[error("synthesis parameters degenerate: {0}")]
    Synth(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
