//! Dataset plumbing: manifests, stratified artist-aware splitting, and
//! synthetic desk-scale dataset generation.

mod manifest;
mod split;
mod synth;

pub use manifest::{ClipRecord, DatasetManifest, Split, TagDef};
pub use split::{apply_split, split_dataset, SplitFractions};
pub use synth::{generate_synthetic_dataset, SynthSpec};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum DataError {
    #[error("duplicate clip id '{id}'")]
    DuplicateClip { id: String },
    #[error("clip '{id}': audio file '{path}' does not exist")]
    MissingAudio { id: String, path: String },
    #[error("clip '{id}': target for tag '{tag}' is {value}, must be in [0, 1]")]
    TargetOutOfRange { id: String, tag: String, value: f64 },
    #[error("clip '{id}': classification tag '{tag}' must be 0 or 1, got {value}")]
    NonBinaryTarget { id: String, tag: String, value: f64 },
    #[error("{file}:{line}: {detail}")]
    Parse { file: String, line: usize, detail: String },
    #[error("invalid manifest: {0}")]
    Validation(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

pub type Result<T> = std::result::Result<T, DataError>;
