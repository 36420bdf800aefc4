//! Versioned layout document: every stage result plus provenance.
//!
//! A single document type flows through the stages: each stage fills in its own
//! fields, so intermediate documents can be saved, inspected and resumed.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::IoError;
use crate::config::PipelineConfig;
use crate::patchfit::{BezierPatch, FitReport};
use crate::pipeline::{PipelineOutput, RepairRecord, StageTimings};
use crate::quality::QualityReport;
use crate::segmentation::{PatchLayout, SegmentationReport};
use crate::splines::PreprocessedBoundary;
use crate::topology::Topology;

pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical JSON encoding of the configuration.
    pub config_hash: String,
    pub tool_version: String,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutDocument {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub config: PipelineConfig,
    pub provenance: Provenance,
    #[serde(default)]
    pub boundary: Option<PreprocessedBoundary>,
    #[serde(default)]
    pub topology: Option<Topology>,
    #[serde(default)]
    pub layout: Option<PatchLayout>,
    #[serde(default)]
    pub segmentation: Option<SegmentationReport>,
    #[serde(default)]
    pub patches: Vec<BezierPatch>,
    #[serde(default)]
    pub fit: Option<FitReport>,
    #[serde(default)]
    pub repairs: Vec<RepairRecord>,
    #[serde(default)]
    pub quality: Option<QualityReport>,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, Value>,
}

pub fn config_hash(cfg: &PipelineConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("configuration serializes");
    hex::encode(Sha256::digest(&canonical))
}

impl LayoutDocument {
    /// Empty document bound to `cfg`.
    pub fn new(cfg: &PipelineConfig, name: Option<String>) -> Self {
        Self {
            version: LAYOUT_VERSION,
            name,
            config: cfg.clone(),
            provenance: Provenance {
                config_hash: config_hash(cfg),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                timings: StageTimings::default(),
            },
            boundary: None,
            topology: None,
            layout: None,
            segmentation: None,
            patches: Vec::new(),
            fit: None,
            repairs: Vec::new(),
            quality: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn from_output(out: &PipelineOutput, cfg: &PipelineConfig, name: Option<String>) -> Self {
        let mut doc = Self::new(cfg, name);
        doc.provenance.timings = out.timings;
        doc.boundary = Some(out.boundary.clone());
        doc.topology = Some(out.topology.clone());
        doc.layout = Some(out.layout.clone());
        doc.segmentation = Some(out.segmentation.clone());
        doc.patches = out.patches.clone();
        doc.fit = Some(out.fit.clone());
        doc.repairs = out.repairs.clone();
        doc.quality = Some(out.quality.clone());
        doc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout document serializes")
    }

    /// The JSON encoding with all timing fields zeroed; equal for repeated
    /// runs with the same inputs, configuration and seed.
    pub fn canonical_json(&self) -> String {
        let mut d = self.clone();
        d.provenance.timings = StageTimings::default();
        d.to_json()
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let value: Value = serde_json::from_str(text).map_err(IoError::from_json)?;
        let found = value.get("version").and_then(Value::as_u64);
        match found {
            Some(v) if v == LAYOUT_VERSION as u64 => {}
            Some(v) => {
                return Err(IoError::Version {
                    found: v as u32,
                    expected: LAYOUT_VERSION,
                })
            }
            None => {
                return Err(IoError::Parse {
                    line: 0,
                    column: 0,
                    message: "missing field `version`".into(),
                });
            }
        }
        let doc: LayoutDocument = serde_json::from_str(text).map_err(IoError::from_json)?;
        for k in doc.extra.keys() {
            warn!("layout document: ignoring unknown field `{k}`");
        }
        if doc.provenance.config_hash != config_hash(&doc.config) {
            warn!("layout document: configuration does not match its recorded hash");
        }
        Ok(doc)
    }
}

/// Writes through a temporary sibling file and a rename, so a reader never sees a
/// partially written document.
pub fn save_layout(path: impl AsRef<Path>, doc: &LayoutDocument) -> Result<(), IoError> {
    write_atomic(path.as_ref(), doc.to_json().as_bytes())
}

pub fn load_layout(path: impl AsRef<Path>) -> Result<LayoutDocument, IoError> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| IoError::Read {
        path: path.as_ref().display().to_string(),
        reason: e.to_string(),
    })?;
    LayoutDocument::parse(&text)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let err = |e: std::io::Error| IoError::Write {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, bytes).map_err(err)?;
    std::fs::rename(&tmp, path).map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            seed: 7,
            ..PipelineConfig::default()
        };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn round_trip_empty_document() {
        let mut d = LayoutDocument::new(&PipelineConfig::default(), Some("unit".into()));
        d.patches.push(BezierPatch::identity(4));
        let back = LayoutDocument::parse(&d.to_json()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn version_and_truncation_rejected() {
        let d = LayoutDocument::new(&PipelineConfig::default(), None);
        let text = d.to_json();
        let bumped = text.replacen("\"version\": 1", "\"version\": 9", 1);
        assert!(matches!(
            LayoutDocument::parse(&bumped),
            Err(IoError::Version { found: 9, .. })
        ));
        assert!(matches!(
            LayoutDocument::parse(&text[..text.len() / 2]),
            Err(IoError::Parse { .. })
        ));
    }
}
