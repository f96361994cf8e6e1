//! Static knowledge documents, the persona file and scent sequences.
//!
//! Documents are Markdown with TOML front matter between `+++` lines:
//!
//! ```text
//! +++
//! doc_id = "listening"
//! mode_tags = ["briefing", "round"]
//! title = "Listening to incense"
//! +++
//! Body text.
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use genji_core::dialogue::{DialogueError, KnowledgeDoc, Mode, Persona, StaticStore};
use genji_core::session::ScentSequence;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
}

const DEFAULT_DOCS: &[(&str, &str)] = &[
    ("listening.md", include_str!("../data/knowledge/listening.md")),
    ("genji-ko.md", include_str!("../data/knowledge/genji-ko.md")),
    ("sensors.md", include_str!("../data/knowledge/sensors.md")),
    ("rising.md", include_str!("../data/knowledge/rising.md")),
    ("agreement.md", include_str!("../data/knowledge/agreement.md")),
    ("patterns.md", include_str!("../data/knowledge/patterns.md")),
];
pub const DEFAULT_PERSONA: &str = include_str!("../data/persona.toml");
pub const DEFAULT_SEQUENCES: &str = include_str!("../data/sequences.toml");

#[derive(Deserialize)]
struct FrontMatter {
    doc_id: String,
    mode_tags: Vec<Mode>,
    title: String,
}

pub fn parse_doc(text: &str, origin: &Path) -> Result<KnowledgeDoc, KnowledgeError> {
    let err = |reason: &str| KnowledgeError::Parse { path: origin.to_path_buf(), reason: reason.into() };
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let rest = text.strip_prefix("+++\n").ok_or_else(|| err("missing `+++` front matter"))?;
    let end = rest.find("\n+++").ok_or_else(|| err("unterminated front matter"))?;
    let front: FrontMatter = toml::from_str(&rest[..end]).map_err(|e| err(&e.to_string()))?;
    let body = rest[end + 4..].trim_start_matches(['\r', '\n']).trim_end().to_string();
    let doc = KnowledgeDoc { doc_id: front.doc_id, mode_tags: front.mode_tags, title: front.title, body };
    doc.validate()?;
    Ok(doc)
}

/// Every `*.md` file in `dir`, in file-name order.
pub fn load_docs(dir: &Path) -> Result<Vec<KnowledgeDoc>, KnowledgeError> {
    let io = |source| KnowledgeError::Io { path: dir.to_path_buf(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "md"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|source| KnowledgeError::Io { path: p.clone(), source })?;
            parse_doc(&text, p)
        })
        .collect()
}

pub fn default_docs() -> Vec<KnowledgeDoc> {
    DEFAULT_DOCS.iter().map(|(name, text)| parse_doc(text, Path::new(name)).expect("bundled documents parse")).collect()
}

/// Indexes `dir` when given, otherwise the bundled documents.
pub fn static_store(dir: Option<&Path>) -> Result<StaticStore, KnowledgeError> {
    let docs = match dir {
        Some(d) => load_docs(d)?,
        None => default_docs(),
    };
    Ok(StaticStore::index(docs)?)
}

pub fn parse_persona(text: &str, origin: &Path) -> Result<Persona, KnowledgeError> {
    toml::from_str(text).map_err(|e| KnowledgeError::Parse { path: origin.to_path_buf(), reason: e.to_string() })
}

pub fn load_persona(path: Option<&Path>) -> Result<Persona, KnowledgeError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| KnowledgeError::Io { path: p.to_path_buf(), source })?;
            parse_persona(&text, p)
        }
        None => parse_persona(DEFAULT_PERSONA, Path::new("persona.toml")),
    }
}

#[derive(Deserialize)]
struct SequenceFile {
    sequences: Vec<ScentSequence>,
}

pub fn parse_sequences(text: &str, origin: &Path) -> Result<Vec<ScentSequence>, KnowledgeError> {
    let file: SequenceFile = toml::from_str(text)
        .map_err(|e| KnowledgeError::Parse { path: origin.to_path_buf(), reason: e.to_string() })?;
    Ok(file.sequences)
}

pub fn load_sequences(path: Option<&Path>) -> Result<Vec<ScentSequence>, KnowledgeError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| KnowledgeError::Io { path: p.to_path_buf(), source })?;
            parse_sequences(&text, p)
        }
        None => parse_sequences(DEFAULT_SEQUENCES, Path::new("sequences.toml")),
    }
}
