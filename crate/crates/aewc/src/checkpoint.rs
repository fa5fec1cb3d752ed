//! Model checkpoints.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! {
//!   "format": "aewc-checkpoint", "version": 1,
//!   "fingerprint": "<sha-256 of the run schedule>",
//!   "label": "aewc size 3",
//!   "encoder": { char_dim, word_dim, ... },
//!   "vocab": ["sorted", "tokens", ...],
//!   "params": [{"name", "shape", "offset", "frozen_rows"?, "values": [...]}, ...],
//!   "consolidation": { config, omega, delta, importance, anchor, tasks_completed } | null
//! }
//! ```
//!
//! Parameters are listed in flat-index order. Floats are written with
//! shortest round-trip formatting, so loading restores every value bit for
//! bit.

use std::path::Path;

use aewc_core::consolidation::ConsolidationState;
use aewc_core::encoder::EncoderConfig;
use aewc_core::harness::Model;
use aewc_core::params::{ParamEntry, ParamStore};
use aewc_core::text::Vocab;
use serde::{Deserialize, Serialize};

use crate::io::{read_text, write_text};
use crate::{Error, Result};

pub const FORMAT: &str = "aewc-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    #[serde(flatten)]
    pub entry: ParamEntry,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub fingerprint: String,
    #[serde(default)]
    pub label: String,
    pub encoder: EncoderConfig,
    pub vocab: Vec<String>,
    pub params: Vec<StoredParam>,
    pub consolidation: Option<ConsolidationState>,
}

impl Checkpoint {
    pub fn capture(model: &Model, consolidation: Option<&ConsolidationState>, fingerprint: &str, label: &str) -> Self {
        let values = model.params.values();
        Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            fingerprint: fingerprint.into(),
            label: label.into(),
            encoder: model.config.clone(),
            vocab: model.vocab.tokens().to_vec(),
            params: model
                .params
                .entries()
                .iter()
                .map(|e| StoredParam {
                    entry: e.clone(),
                    values: values[e.range()].to_vec(),
                })
                .collect(),
            consolidation: consolidation.cloned(),
        }
    }

    /// Rebuilds the model (and consolidation state, if stored).
    pub fn restore(&self) -> aewc_core::Result<(Model, Option<ConsolidationState>)> {
        let mut values = Vec::new();
        let mut entries = Vec::with_capacity(self.params.len());
        for p in &self.params {
            values.extend_from_slice(&p.values);
            entries.push(p.entry.clone());
        }
        let store = ParamStore::from_parts(entries, values)?;
        let vocab = Vocab::from_words(&self.vocab);
        if vocab.tokens() != self.vocab.as_slice() {
            return Err(aewc_core::Error::Config("checkpoint vocabulary is not sorted and unique".into()));
        }
        if let Some(c) = &self.consolidation {
            if c.len() != store.len() {
                return Err(aewc_core::Error::Alignment {
                    expected: store.len(),
                    got: c.len(),
                });
            }
        }
        let model = Model::from_parts(self.encoder.clone(), vocab, store)?;
        Ok((model, self.consolidation.clone()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoints serialize")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(&read_text(path)?).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if c.format != FORMAT || c.version != VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("not a version {VERSION} {FORMAT} file ({} v{})", c.format, c.version),
            });
        }
        Ok(c)
    }
}
