//! Okapi BM25 over lowercased alphanumeric tokens.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{DialogueError, KnowledgeDoc, Mode};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone)]
struct Indexed {
    doc: KnowledgeDoc,
    tf: BTreeMap<String, u32>,
    len: usize,
}

/// Immutable index over the static knowledge documents. Documents are kept
/// in `doc_id` order, so the index does not depend on insertion order.
#[derive(Debug, Clone, Default)]
pub struct StaticStore {
    docs: Vec<Indexed>,
    df: BTreeMap<String, u32>,
    avg_len: f64,
}

impl StaticStore {
    pub fn index(docs: impl IntoIterator<Item = KnowledgeDoc>) -> Result<Self, DialogueError> {
        let mut by_id = BTreeMap::new();
        for doc in docs {
            doc.validate()?;
            if by_id.contains_key(&doc.doc_id) {
                return Err(DialogueError::DuplicateDoc(doc.doc_id));
            }
            by_id.insert(doc.doc_id.clone(), doc);
        }
        let mut df: BTreeMap<String, u32> = BTreeMap::new();
        let mut total_len = 0usize;
        let docs: Vec<Indexed> = by_id
            .into_values()
            .map(|doc| {
                let tokens = tokenize(&alloc::format!("{} {}", doc.title, doc.body));
                let mut tf = BTreeMap::new();
                for t in &tokens {
                    *tf.entry(t.clone()).or_insert(0) += 1;
                }
                for t in tf.keys() {
                    *df.entry(t.clone()).or_insert(0) += 1;
                }
                total_len += tokens.len();
                Indexed { doc, tf, len: tokens.len() }
            })
            .collect();
        let avg_len = if docs.is_empty() { 0.0 } else { total_len as f64 / docs.len() as f64 };
        Ok(Self { docs, df, avg_len })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&KnowledgeDoc> {
        self.docs.iter().find(|d| d.doc.doc_id == doc_id).map(|d| &d.doc)
    }

    pub fn docs(&self) -> impl Iterator<Item = &KnowledgeDoc> {
        self.docs.iter().map(|d| &d.doc)
    }

    /// `ln((N - n + 0.5) / (n + 0.5) + 1)` with `N` and `n` over the whole store.
    pub fn idf(&self, term: &str) -> f64 {
        let n = *self.df.get(term).unwrap_or(&0) as f64;
        let total = self.docs.len() as f64;
        libm::log((total - n + 0.5) / (n + 0.5) + 1.0)
    }

    /// Top `k` documents tagged with `mode`, highest score first, ties by
    /// `doc_id`. Documents scoring zero are left out.
    pub fn retrieve(&self, query: &str, mode: Mode, k: usize) -> Vec<ScoredDoc> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        let mut scored: Vec<ScoredDoc> = self
            .docs
            .iter()
            .filter(|d| d.doc.has_mode(mode))
            .filter_map(|d| {
                let norm = if self.avg_len > 0.0 { d.len as f64 / self.avg_len } else { 0.0 };
                let score: f64 = terms
                    .iter()
                    .filter_map(|t| d.tf.get(t).map(|&f| (t, f as f64)))
                    .map(|(t, f)| self.idf(t) * f * (BM25_K1 + 1.0) / (f + BM25_K1 * (1.0 - BM25_B + BM25_B * norm)))
                    .sum();
                (score > 0.0).then(|| ScoredDoc { doc_id: d.doc.doc_id.clone(), score })
            })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
        scored.truncate(k);
        scored
    }
}
