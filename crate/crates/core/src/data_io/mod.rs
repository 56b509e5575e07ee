//! File formats and the synthetic cohort generator.

mod emb;
mod json;
mod manifest;
mod model;
mod synth;

use std::path::PathBuf;

use thiserror::Error;

pub use emb::{decode_embedding, encode_embedding, read_embedding, read_embedding_checked, write_embedding, EMB_MAGIC};
pub use json::{to_json_string, write_json};
pub use manifest::{read_manifest, write_manifest, CohortManifest, ManifestEntry};
pub use model::{load_model, save_model, read_embedding_set, write_embedding_set, EmbeddingSet, ModelFile, SlideRecord, MODEL_VERSION};
pub use synth::{generate_synthetic, write_synthetic, SubjectTruth, SynthCohort, SynthSpec, SynthTruth};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: bad magic {found:?}, expected \"EMB1\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: truncated payload ({found} bytes, expected {expected})")]
    Truncated { path: PathBuf, expected: usize, found: usize },
    #[error("{path}: embedding dim {found} does not match manifest dim {expected}")]
    DimMismatch { path: PathBuf, expected: usize, found: usize },
    #[error("{path}: schema violation at {field}: {message}")]
    Schema { path: PathBuf, field: String, message: String },
    #[error("{path}: duplicate subject_id {id:?}")]
    DuplicateSubject { path: PathBuf, id: String },
    #[error("{path}: subject {id:?} has invalid time {time}")]
    InvalidTime { path: PathBuf, id: String, time: f64 },
    #[error("{path}: unsupported model version {found:?}, expected {expected:?}")]
    VersionMismatch { path: PathBuf, found: String, expected: String },
    #[error("{path}: invalid contents: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DataError {
    let path = path.into();
    move |source| DataError::Io { path, source }
}
