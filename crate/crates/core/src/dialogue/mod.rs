//! The partner's language layer: knowledge retrieval, alignment between the
//! player's and the partner's judgments, session memory, prompt assembly and
//! text generation.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::partition::PartitionError;
use crate::session::SessionPhase;

mod alignment;
mod dynamic;
mod generate;
mod prompt;
mod retrieval;

pub use alignment::{ai_match_from_classes, ai_match_judgment, compute_alignment, Alignment, AlignmentKind};
pub use dynamic::{
    aggregate_partitions, aggregate_stats, pair_index, Aggregates, DynamicEntry, DynamicRecord, DynamicStore,
    SessionMemory, PAIRS,
};
pub use generate::{generate, GenerateError, StubGenerator, TextGenerator, Utterance};
pub use prompt::{
    assemble_prompt, build_query, trend_words, Persona, PromptBundle, PromptConfig, RoundFact, SessionFacts, Snippet,
    TrendWord, AGGREGATE_FLOOR, TREND_THRESHOLD,
};
pub use retrieval::{tokenize, ScoredDoc, StaticStore, BM25_B, BM25_K1};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DialogueError {
    #[error("document {0} has an empty body")]
    EmptyBody(String),
    #[error("document {0} has no mode tags")]
    NoModeTags(String),
    #[error("duplicate document id {0}")]
    DuplicateDoc(String),
    #[error("no prediction for round {0}")]
    MissingPrediction(u8),
    #[error("mode {mode} does not fit phase {phase}")]
    ModePhase { mode: Mode, phase: SessionPhase },
    #[error("round {round} record: {reason}")]
    BadRecord { round: u8, reason: &'static str },
    #[error("prompt does not fit in {budget} characters")]
    BudgetTooSmall { budget: usize },
    #[error("unknown mode {0:?}")]
    UnknownMode(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

/// Which part of the experience an utterance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Briefing,
    Round,
    Debrief,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Briefing, Mode::Round, Mode::Debrief];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Briefing => "briefing",
            Mode::Round => "round",
            Mode::Debrief => "debrief",
        }
    }

    /// Mode a phase speaks in, if any.
    pub fn for_phase(phase: SessionPhase) -> Option<Mode> {
        match phase {
            SessionPhase::Briefing => Some(Mode::Briefing),
            SessionPhase::RoundDialogue(_) | SessionPhase::RoundConfirm(_) => Some(Mode::Round),
            SessionPhase::Debrief => Some(Mode::Debrief),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = DialogueError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| DialogueError::UnknownMode(s.into()))
    }
}

/// A piece of static knowledge available to retrieval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeDoc {
    pub doc_id: String,
    pub mode_tags: Vec<Mode>,
    pub title: String,
    pub body: String,
}

impl KnowledgeDoc {
    pub fn validate(&self) -> Result<(), DialogueError> {
        if self.body.trim().is_empty() {
            return Err(DialogueError::EmptyBody(self.doc_id.clone()));
        }
        if self.mode_tags.is_empty() {
            return Err(DialogueError::NoModeTags(self.doc_id.clone()));
        }
        Ok(())
    }

    pub fn has_mode(&self, mode: Mode) -> bool {
        self.mode_tags.contains(&mode)
    }
}

#[cfg(test)]
mod tests;
