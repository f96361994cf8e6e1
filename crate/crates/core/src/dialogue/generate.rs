//! Text generation behind a trait, with a deterministic template stub.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{AlignmentKind, DynamicEntry, DynamicStore, Mode, PromptBundle};
use crate::partition::Judgment;
use crate::session::UtteranceRecord;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("generation failed: {message}")]
pub struct GenerateError {
    pub message: String,
    /// Seconds the caller should wait before retrying, when known.
    pub retry_after_s: Option<u64>,
}

pub trait TextGenerator {
    fn generate(&self, bundle: &PromptBundle) -> Result<String, GenerateError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub mode: Mode,
    pub round: Option<u8>,
    pub text: String,
    /// Hook for synthesized speech.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_url: Option<String>,
}

impl Utterance {
    pub fn record(&self) -> UtteranceRecord {
        UtteranceRecord { mode: self.mode, round: self.round, text: self.text.clone() }
    }
}

/// Fills a fixed template per mode and alignment. A pure function of the
/// bundle.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubGenerator;

fn judgment_phrase(j: Judgment) -> String {
    match j {
        Judgment::New => "a new scent".into(),
        Judgment::MatchRound(r) => alloc::format!("the scent of round {r}"),
    }
}

impl StubGenerator {
    pub fn render(&self, bundle: &PromptBundle) -> String {
        let f = &bundle.facts;
        let mut out = String::new();
        match bundle.mode {
            Mode::Briefing => {
                out.push_str(
                    "Welcome. Five scents will pass between us, one at a time. Breathe slowly and listen to each.",
                );
                if let Some(s) = bundle.snippets.first() {
                    let _ = write!(out, " Before we begin: {}.", s.title);
                }
            }
            Mode::Round => {
                let round = f.round.unwrap_or(0);
                match (&f.alignment, f.human, f.ai) {
                    (Some(al), Some(h), Some(a)) => match al.kind {
                        AlignmentKind::Aligned => {
                            let _ = write!(out, "Round {round}: we agree. We both sense {}.", judgment_phrase(h));
                        }
                        AlignmentKind::Divergent => {
                            let _ = write!(
                                out,
                                "Round {round}: we sense this differently. You hear {}, while my sensors suggest {}.",
                                judgment_phrase(h),
                                judgment_phrase(a)
                            );
                        }
                        AlignmentKind::PartiallyAligned => {
                            let _ = write!(
                                out,
                                "Round {round}: we both hear an echo, of different scents. You return to {}, I return to {}.",
                                judgment_phrase(h),
                                judgment_phrase(a)
                            );
                        }
                    },
                    _ => {
                        let _ = write!(out, "Round {round}: let us hold this scent together.");
                    }
                }
                if let Some(p) = &f.prediction {
                    let _ = write!(
                        out,
                        " My sensors lean toward {} ({:.2}).",
                        bundle.class_name(p.class),
                        p.distribution[p.class]
                    );
                    if p.low_confidence {
                        out.push_str(" My reading is faint this time.");
                    }
                }
                if let Some(t) = &f.trends {
                    let moving: Vec<String> = crate::sensor::CHANNEL_NAMES
                        .iter()
                        .zip(t)
                        .filter(|(_, w)| **w != super::TrendWord::Flat)
                        .take(2)
                        .map(|(n, w)| alloc::format!("{n} {}", w.as_str()))
                        .collect();
                    if !moving.is_empty() {
                        let _ = write!(out, " I notice {}.", moving.join(" and "));
                    }
                }
            }
            Mode::Debrief => {
                out.push_str("Looking back on our five scents.");
                for r in &f.rounds {
                    let _ = write!(out, " Round {}: I voted {}.", r.round, bundle.class_name(r.class));
                }
                if let Some(s) = &f.score {
                    let _ = write!(out, " Your pattern agreed on {} of {} pairs.", s.pair_matches, s.total_pairs);
                    if s.exact {
                        out.push_str(" It matches the true pattern exactly.");
                    }
                }
            }
        }
        out
    }
}

impl TextGenerator for StubGenerator {
    fn generate(&self, bundle: &PromptBundle) -> Result<String, GenerateError> {
        Ok(self.render(bundle))
    }
}

/// Generates an utterance and records it in the session's memory.
pub fn generate(
    generator: &dyn TextGenerator,
    bundle: &PromptBundle,
    session_id: &str,
    store: &mut DynamicStore,
) -> Result<Utterance, GenerateError> {
    let text = generator.generate(bundle)?;
    let utterance = Utterance { mode: bundle.mode, round: bundle.facts.round, text, audio_url: None };
    store
        .apply(DynamicEntry::Utterance { session_id: session_id.into(), utterance: utterance.record() })
        .map_err(|e| GenerateError { message: alloc::format!("{e}"), retry_after_s: None })?;
    Ok(utterance)
}
