use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::json::{read_json, write_json};
use super::DataError;
use crate::training::SurvivalRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub subject_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub embedding_path: String,
    pub time: f64,
    pub censored: bool,
}

impl ManifestEntry {
    pub fn record(&self) -> SurvivalRecord {
        SurvivalRecord { subject_id: self.subject_id.clone(), time: self.time, censored: self.censored }
    }
}

/// Cohort listing: `{"dim": d, "subjects": [{subject_id, embedding_path, time, censored}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortManifest {
    pub dim: usize,
    pub subjects: Vec<ManifestEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CohortManifest {
    pub fn embedding_path(&self, entry: &ManifestEntry) -> PathBuf {
        let p = Path::new(&entry.embedding_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn records(&self) -> Vec<SurvivalRecord> {
        self.subjects.iter().map(ManifestEntry::record).collect()
    }

    fn validate(&self, path: &Path) -> Result<(), DataError> {
        if self.dim == 0 {
            return Err(DataError::Schema { path: path.into(), field: "dim".into(), message: "must be positive".into() });
        }
        let mut seen = HashSet::new();
        for e in &self.subjects {
            if !seen.insert(e.subject_id.as_str()) {
                return Err(DataError::DuplicateSubject { path: path.into(), id: e.subject_id.clone() });
            }
            if !(e.time.is_finite() && e.time > 0.0) {
                return Err(DataError::InvalidTime { path: path.into(), id: e.subject_id.clone(), time: e.time });
            }
        }
        Ok(())
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<CohortManifest, DataError> {
    let path = path.as_ref();
    let mut m: CohortManifest = read_json(path)?;
    m.validate(path)?;
    m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(m)
}

pub fn write_manifest(path: impl AsRef<Path>, m: &CohortManifest) -> Result<(), DataError> {
    write_json(path, m)
}
