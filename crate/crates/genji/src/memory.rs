//! Persistence for the dialogue layer's dynamic store.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use genji_core::dialogue::{aggregate_stats, Aggregates, DialogueError, DynamicEntry, DynamicStore};

use crate::eventlog::{read_jsonl, JsonlWriter, LogError};

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Dynamic store backed by `memory.jsonl`, with compacted aggregates in
/// `aggregates.json`.
#[derive(Debug, Default)]
pub struct MemoryStore {
    store: DynamicStore,
    writer: Option<JsonlWriter>,
    aggregates_path: Option<PathBuf>,
}

impl MemoryStore {
    /// Memory only, nothing written to disk.
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(dir: &Path) -> Result<Self, MemoryError> {
        let log = dir.join("memory.jsonl");
        let entries: Vec<DynamicEntry> = if log.exists() { read_jsonl(&log)? } else { Vec::new() };
        let store = DynamicStore::from_entries(entries)?;
        Ok(Self { store, writer: Some(JsonlWriter::open(&log)?), aggregates_path: Some(dir.join("aggregates.json")) })
    }

    pub fn store(&self) -> &DynamicStore {
        &self.store
    }

    /// Logs the entry, then applies it.
    pub fn append(&mut self, entry: DynamicEntry) -> Result<(), MemoryError> {
        let completed = matches!(entry, DynamicEntry::Completed { .. });
        let mut probe = self.store.clone();
        probe.apply(entry.clone())?;
        if let Some(w) = &mut self.writer {
            w.append(std::slice::from_ref(&entry))?;
        }
        self.store = probe;
        if completed {
            self.write_aggregates()?;
        }
        Ok(())
    }

    pub fn aggregates(&self, sequence_id: &str) -> Aggregates {
        aggregate_stats(&self.store, sequence_id)
    }

    /// Aggregates for every sequence with completed sessions.
    pub fn all_aggregates(&self) -> BTreeMap<String, Aggregates> {
        let mut ids: Vec<String> = Vec::new();
        for e in self.store.entries() {
            if let DynamicEntry::Completed { sequence_id, .. } = e {
                if !ids.contains(sequence_id) {
                    ids.push(sequence_id.clone());
                }
            }
        }
        ids.into_iter()
            .map(|id| {
                let agg = self.aggregates(&id);
                (id, agg)
            })
            .collect()
    }

    fn write_aggregates(&self) -> Result<(), MemoryError> {
        let Some(path) = &self.aggregates_path else { return Ok(()) };
        let text = serde_json::to_string_pretty(&self.all_aggregates()).expect("aggregates serialize") + "\n";
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|source| MemoryError::Io { path: tmp.clone(), source })?;
        fs::rename(&tmp, path).map_err(|source| MemoryError::Io { path: path.clone(), source })
    }
}
