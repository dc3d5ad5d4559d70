//! Replay adapter: recorded predictions of an external identifier, mapped
//! into the internal label space so black-box tools can serve as roots.

use crate::error::{Error, Result};
use crate::label::LanguageLabel;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

/// Recorded external predictions plus the external-to-internal label map.
#[derive(Debug, Clone)]
pub struct ReplayTable {
    rows: BTreeMap<String, String>,
    label_map: BTreeMap<String, LanguageLabel>,
    /// External labels that appear in the rows but have no mapping, with
    /// occurrence counts.
    unmapped: BTreeMap<String, usize>,
}

impl ReplayTable {
    pub fn new(
        rows: BTreeMap<String, String>,
        label_map: BTreeMap<String, LanguageLabel>,
    ) -> Self {
        let mut unmapped = BTreeMap::new();
        for external in rows.values() {
            if !label_map.contains_key(external) {
                *unmapped.entry(external.clone()).or_insert(0) += 1;
            }
        }
        ReplayTable {
            rows,
            label_map,
            unmapped,
        }
    }

    /// Load from a headerless `example_id<TAB>external_label` TSV and a
    /// JSON object mapping external labels to internal codes (or `und`).
    pub fn from_files(predictions_tsv: &Path, label_map_json: &Path) -> Result<Self> {
        let tsv = fs::read_to_string(predictions_tsv)
            .map_err(|e| Error::io(predictions_tsv, e))?;
        let mut rows = BTreeMap::new();
        let file = predictions_tsv.display().to_string();
        for (i, line) in tsv.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(2, '\t');
            let id = parts.next().unwrap_or_default();
            let external = parts.next().ok_or_else(|| {
                Error::parse(&file, i + 1, "expected example_id<TAB>external_label")
            })?;
            if id.is_empty() {
                return Err(Error::parse(&file, i + 1, "empty example id"));
            }
            if rows.insert(id.to_string(), external.to_string()).is_some() {
                return Err(Error::parse(
                    &file,
                    i + 1,
                    format!("duplicate example id {id:?}"),
                ));
            }
        }

        let map_text = fs::read_to_string(label_map_json)
            .map_err(|e| Error::io(label_map_json, e))?;
        let raw: BTreeMap<String, String> = serde_json::from_str(&map_text).map_err(|e| {
            Error::parse(label_map_json.display().to_string(), e.line(), e.to_string())
        })?;
        let mut label_map = BTreeMap::new();
        for (external, internal) in raw {
            label_map.insert(external, LanguageLabel::new(internal)?);
        }
        Ok(ReplayTable::new(rows, label_map))
    }

    pub fn rows(&self) -> &BTreeMap<String, String> {
        &self.rows
    }

    pub fn label_map(&self) -> &BTreeMap<String, LanguageLabel> {
        &self.label_map
    }

    pub fn unmapped(&self) -> &BTreeMap<String, usize> {
        &self.unmapped
    }

    /// Internal labels the replayed tool can produce, `und` excluded.
    pub fn supported_labels(&self) -> BTreeSet<LanguageLabel> {
        self.label_map
            .values()
            .filter(|l| !l.is_und())
            .cloned()
            .collect()
    }

    /// Map a recorded prediction into the internal label space; unmapped
    /// external labels come back as `und`.
    pub fn predict(&self, example_id: &str) -> Result<LanguageLabel> {
        let external = self.rows.get(example_id).ok_or_else(|| {
            Error::Lookup(format!("no recorded prediction for example {example_id:?}"))
        })?;
        Ok(self
            .label_map
            .get(external)
            .cloned()
            .unwrap_or_else(LanguageLabel::und))
    }
}

/// Free-function form of [`ReplayTable::predict`].
pub fn replay_predict(table: &ReplayTable, example_id: &str) -> Result<LanguageLabel> {
    table.predict(example_id)
}
