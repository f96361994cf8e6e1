//! Single-use session tokens tied to scent sequences.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::eventlog::{read_jsonl, JsonlWriter, LogError};

/// Random bytes per token; encodes to 22 URL-safe characters.
pub const TOKEN_BYTES: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token: String,
    pub sequence_id: String,
    pub created_at: u64,
    pub single_use: bool,
    #[serde(default)]
    pub used: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
enum TokenLogEntry {
    Issued { record: TokenRecord },
    Used { token: String },
}

#[derive(Debug, thiserror::Error)]
pub enum TokenError {
    #[error("unknown token")]
    Unknown,
    #[error("token has already been used")]
    Used,
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Default)]
pub struct TokenRegistry {
    inner: Mutex<Inner>,
}

#[derive(Default)]
struct Inner {
    records: HashMap<String, TokenRecord>,
    log: Option<JsonlWriter>,
}

pub fn generate_token() -> String {
    let mut bytes = [0u8; TOKEN_BYTES];
    rand::rng().fill_bytes(&mut bytes);
    URL_SAFE_NO_PAD.encode(bytes)
}

/// Shareable link carrying the token as the `t` query parameter.
pub fn join_url(public_url: &str, token: &str) -> String {
    format!("{}/join?t={token}", public_url.trim_end_matches('/'))
}

/// Token from a join link.
pub fn token_from_url(url: &str) -> Option<&str> {
    let (_, query) = url.split_once('?')?;
    query.split('&').find_map(|kv| kv.strip_prefix("t=")).filter(|t| !t.is_empty())
}

impl TokenRegistry {
    /// Registry kept in memory only.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Registry persisted to `path`, restoring earlier issues and uses.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let mut records = HashMap::new();
        if path.exists() {
            for entry in read_jsonl::<TokenLogEntry>(path)? {
                match entry {
                    TokenLogEntry::Issued { record } => {
                        records.insert(record.token.clone(), record);
                    }
                    TokenLogEntry::Used { token } => {
                        if let Some(r) = records.get_mut(&token) {
                            r.used = true;
                        }
                    }
                }
            }
        }
        let log = Some(JsonlWriter::open(path)?);
        Ok(Self { inner: Mutex::new(Inner { records, log }) })
    }

    /// Issues a fresh token, or registers `token` when given.
    pub fn issue(
        &self,
        token: Option<String>,
        sequence_id: &str,
        single_use: bool,
        now_ms: u64,
    ) -> Result<TokenRecord, TokenError> {
        let mut inner = self.inner.lock().expect("token lock");
        let token = token.unwrap_or_else(generate_token);
        let record = TokenRecord {
            token: token.clone(),
            sequence_id: sequence_id.into(),
            created_at: now_ms,
            single_use,
            used: false,
        };
        if let Some(log) = &mut inner.log {
            log.append(&[TokenLogEntry::Issued { record: record.clone() }])?;
        }
        inner.records.insert(token, record.clone());
        Ok(record)
    }

    pub fn get(&self, token: &str) -> Option<TokenRecord> {
        self.inner.lock().expect("token lock").records.get(token).cloned()
    }

    /// Resolves the token and, for single-use tokens, marks it used. Exactly
    /// one of any number of concurrent calls succeeds.
    pub fn consume(&self, token: &str) -> Result<TokenRecord, TokenError> {
        let mut inner = self.inner.lock().expect("token lock");
        let record = inner.records.get(token).cloned().ok_or(TokenError::Unknown)?;
        if !record.single_use {
            return Ok(record);
        }
        if record.used {
            return Err(TokenError::Used);
        }
        if let Some(log) = &mut inner.log {
            log.append(&[TokenLogEntry::Used { token: token.into() }])?;
        }
        inner.records.get_mut(token).expect("present").used = true;
        Ok(record)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("token lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
