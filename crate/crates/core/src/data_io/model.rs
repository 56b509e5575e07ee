use std::path::Path;

use serde::{Deserialize, Serialize};

use super::json::{read_json, write_json};
use super::{io_err, DataError};
use crate::evidence::PrototypeBank;
use crate::gmm::{PatchPrototypes, SlideEmbedding};
use crate::training::{Sample, SurvivalRecord, TrainConfig};

pub const MODEL_VERSION: &str = "dpsurv-model-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: String,
    pub bank: PrototypeBank,
    pub patch_prototypes: PatchPrototypes,
    pub config: TrainConfig,
}

pub fn save_model(
    path: impl AsRef<Path>,
    bank: &PrototypeBank,
    patch_prototypes: &PatchPrototypes,
    config: &TrainConfig,
) -> Result<(), DataError> {
    let file = ModelFile {
        version: MODEL_VERSION.into(),
        bank: bank.clone(),
        patch_prototypes: patch_prototypes.clone(),
        config: config.clone(),
    };
    write_json(path, &file)
}

#[derive(Deserialize)]
struct VersionProbe {
    version: Option<String>,
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(PrototypeBank, PatchPrototypes, TrainConfig), DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let probe: VersionProbe = serde_json::from_str(&text)
        .map_err(|e| DataError::Schema { path: path.into(), field: ".".into(), message: e.to_string() })?;
    match probe.version.as_deref() {
        Some(MODEL_VERSION) => {}
        Some(other) => {
            return Err(DataError::VersionMismatch { path: path.into(), found: other.into(), expected: MODEL_VERSION.into() })
        }
        None => return Err(DataError::Schema { path: path.into(), field: "version".into(), message: "missing field".into() }),
    }
    let file: ModelFile = read_json(path)?;
    let invalid = |message: String| DataError::Invalid { path: path.into(), message };
    file.bank.validate().map_err(|e| invalid(e.to_string()))?;
    PatchPrototypes::new(file.patch_prototypes.means().to_vec()).map_err(|e| invalid(e.to_string()))?;
    file.config.validate().map_err(|e| invalid(e.to_string()))?;
    if file.patch_prototypes.count() != file.bank.component_count() || file.patch_prototypes.dim() != file.bank.dim() {
        return Err(invalid("patch prototypes do not match the prototype bank".into()));
    }
    Ok((file.bank, file.patch_prototypes, file.config))
}

/// One slide's fitted embedding with its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideRecord {
    pub subject_id: String,
    pub time: f64,
    pub censored: bool,
    pub embedding: SlideEmbedding,
}

impl SlideRecord {
    pub fn record(&self) -> SurvivalRecord {
        SurvivalRecord { subject_id: self.subject_id.clone(), time: self.time, censored: self.censored }
    }

    pub fn sample(&self) -> Sample {
        (self.embedding.clone(), self.record())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub n_components: usize,
    pub slides: Vec<SlideRecord>,
}

impl EmbeddingSet {
    pub fn samples(&self) -> Vec<Sample> {
        self.slides.iter().map(SlideRecord::sample).collect()
    }
}

pub fn write_embedding_set(path: impl AsRef<Path>, set: &EmbeddingSet) -> Result<(), DataError> {
    write_json(path, set)
}

pub fn read_embedding_set(path: impl AsRef<Path>) -> Result<EmbeddingSet, DataError> {
    let path = path.as_ref();
    let set: EmbeddingSet = read_json(path)?;
    for s in &set.slides {
        let e = &s.embedding;
        let bad = e.count() != set.n_components || e.dim() != set.dim || e.validate().is_err();
        if bad || s.record().validate().is_err() {
            return Err(DataError::Invalid { path: path.into(), message: format!("slide {:?} is inconsistent", s.subject_id) });
        }
    }
    Ok(set)
}
