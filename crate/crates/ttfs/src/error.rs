//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, simulation, training and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or model invariant was violated.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Matrix or activity shapes are inconsistent.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Training diverged (non-finite loss).
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    NonFiniteLoss { epoch: usize },

    /// Required membrane traces were not recorded.
    #[error("missing traces: {0}")]
    MissingTraces(String),

    /// No point of the sweep grid satisfied the accuracy floor.
    #[error("no grid point meets the accuracy floor (best achieved accuracy {best_accuracy:.4})")]
    Infeasible { best_accuracy: f64 },

    /// Malformed IDX payload.
    #[error("idx parse error: {0}")]
    Idx(String),

    /// An archive with an unknown format version was loaded.
    #[error("unsupported archive format version {found} (expected {expected})")]
    ArchiveVersion { found: u32, expected: u32 },

    /// Archive content does not describe a valid network.
    #[error("archive error: {0}")]
    Archive(String),

    /// Dataset download failed.
    #[error("fetch error: {0}")]
    Fetch(String),

    /// Gzip decompression failed.
    #[error("decompression error in {file}: {source}")]
    Gzip {
        file: String,
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
