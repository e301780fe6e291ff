//! On-disk corpus layout: a directory holding `manifest.json` and one
//! `encounters/{encounter_id}.json` document per bundle.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_bundle, EncounterBundle, Metric, Violation, BUNDLE_SCHEMA_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENCOUNTER_DIR: &str = "encounters";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate encounter_id {0:?} in corpus")]
    DuplicateId(String),
    #[error("manifest lists {listed:?} but document holds {found:?}")]
    IdMismatch { listed: String, found: String },
    #[error("unsupported bundle schema version {0}")]
    SchemaVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    pub encounter_ids: Vec<String>,
}

/// In-memory set of bundles, in manifest order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub bundles: Vec<EncounterBundle>,
}

impl Corpus {
    pub fn new(bundles: Vec<EncounterBundle>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for b in &bundles {
            if !seen.insert(b.encounter_id.as_str()) {
                return Err(CorpusError::DuplicateId(b.encounter_id.clone()));
            }
        }
        Ok(Self { bundles })
    }

    pub fn len(&self) -> usize {
        self.bundles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bundles.is_empty()
    }

    pub fn manifest(&self) -> Manifest {
        let metrics: HashSet<Metric> = self.bundles.iter().map(|b| b.metric).collect();
        Manifest {
            schema_version: BUNDLE_SCHEMA_VERSION,
            metric: (metrics.len() == 1).then(|| *metrics.iter().next().unwrap()),
            encounter_ids: self.bundles.iter().map(|b| b.encounter_id.clone()).collect(),
        }
    }

    /// Every bundle-level violation, prefixed with the encounter id.
    pub fn validate(&self) -> Vec<(String, Violation)> {
        self.bundles
            .iter()
            .flat_map(|b| validate_bundle(b).into_iter().map(move |v| (b.encounter_id.clone(), v)))
            .collect()
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        let enc_dir = dir.join(ENCOUNTER_DIR);
        create_dir(&enc_dir)?;
        for b in &self.bundles {
            write_json(&enc_dir.join(format!("{}.json", b.encounter_id)), b)?;
        }
        write_json(&dir.join(MANIFEST_FILE), &self.manifest())
    }

    pub fn load_dir(dir: &Path) -> Result<Self, CorpusError> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(CorpusError::SchemaVersion(manifest.schema_version));
        }
        let mut bundles = Vec::with_capacity(manifest.encounter_ids.len());
        for id in &manifest.encounter_ids {
            let b: EncounterBundle = read_json(&dir.join(ENCOUNTER_DIR).join(format!("{id}.json")))?;
            if b.schema_version != BUNDLE_SCHEMA_VERSION {
                return Err(CorpusError::SchemaVersion(b.schema_version));
            }
            if &b.encounter_id != id {
                return Err(CorpusError::IdMismatch {
                    listed: id.clone(),
                    found: b.encounter_id,
                });
            }
            bundles.push(b);
        }
        Self::new(bundles)
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CorpusError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CorpusError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CorpusError::Json {
        path: path.to_path_buf(),
        source,
    })
}
