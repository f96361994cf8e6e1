//! Prompt assembly from session state, retrieved knowledge and aggregates.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{ai_match_judgment, compute_alignment, Aggregates, Alignment, DialogueError, Mode, StaticStore};
use crate::partition::{AgreementScore, Judgment};
use crate::sensor::{Channels, CHANNEL_NAMES};
use crate::session::{AiPrediction, Session, SessionPhase};
use crate::{NUM_CHANNELS, NUM_CLASSES, ROUNDS};

/// Slopes below this magnitude (units per second) read as flat.
pub const TREND_THRESHOLD: f64 = 0.01;
/// Aggregates stay out of prompts until this many sessions have completed.
pub const AGGREGATE_FLOOR: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendWord {
    Rising,
    Falling,
    Flat,
}

impl TrendWord {
    pub fn from_slope(slope: f64) -> Self {
        if slope.abs() < TREND_THRESHOLD {
            TrendWord::Flat
        } else if slope > 0.0 {
            TrendWord::Rising
        } else {
            TrendWord::Falling
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrendWord::Rising => "rising",
            TrendWord::Falling => "falling",
            TrendWord::Flat => "flat",
        }
    }
}

pub fn trend_words(slopes: &Channels) -> [TrendWord; NUM_CHANNELS] {
    core::array::from_fn(|c| TrendWord::from_slope(slopes[c]))
}

/// Voice of the partner. Shipped as an editable data file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub preamble: String,
    #[serde(default)]
    pub class_names: Vec<String>,
}

impl Persona {
    pub fn class_name(&self, class: usize) -> String {
        self.class_names.get(class).cloned().unwrap_or_else(|| alloc::format!("class {class}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    /// Maximum number of retrieved snippets.
    pub k: usize,
    /// Maximum rendered length in characters.
    pub budget: usize,
    /// Confidence margin for the partner's match rule; off when `None`.
    pub min_margin: Option<f64>,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self { k: 3, budget: 4000, min_margin: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundFact {
    pub round: u8,
    pub distribution: [f64; NUM_CLASSES],
    pub class: usize,
    pub low_confidence: bool,
}

impl RoundFact {
    fn from_prediction(p: &AiPrediction) -> Self {
        Self { round: p.round, distribution: p.probs, class: p.class(), low_confidence: p.low_confidence }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionFacts {
    pub round: Option<u8>,
    pub human: Option<Judgment>,
    pub ai: Option<Judgment>,
    pub alignment: Option<Alignment>,
    pub prediction: Option<RoundFact>,
    pub trends: Option<[TrendWord; NUM_CHANNELS]>,
    pub aggregates: Option<Aggregates>,
    /// Every round, debrief only.
    pub rounds: Vec<RoundFact>,
    pub score: Option<AgreementScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub mode: Mode,
    pub persona_name: String,
    pub preamble: String,
    pub class_names: Vec<String>,
    /// Highest retrieval score first.
    pub snippets: Vec<Snippet>,
    pub facts: SessionFacts,
    pub budget: usize,
}

fn distribution_text(d: &[f64; NUM_CLASSES]) -> String {
    let parts: Vec<String> = d.iter().map(|p| alloc::format!("{p:.2}")).collect();
    parts.join(" ")
}

impl PromptBundle {
    pub fn class_name(&self, class: usize) -> String {
        self.class_names.get(class).cloned().unwrap_or_else(|| alloc::format!("class {class}"))
    }

    /// Plain-text prompt; its character count never exceeds `budget`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[persona] {}", self.persona_name);
        let _ = writeln!(out, "{}", self.preamble);
        let _ = writeln!(out, "[mode] {}", self.mode);
        if !self.snippets.is_empty() {
            let _ = writeln!(out, "[knowledge]");
            for s in &self.snippets {
                let _ = writeln!(out, "- {}: {}", s.title, s.text);
            }
        }
        let _ = writeln!(out, "[facts]");
        let f = &self.facts;
        if let Some(r) = f.round {
            let _ = writeln!(out, "round: {r}");
        }
        if let Some(h) = f.human {
            let _ = writeln!(out, "player judgment: {h}");
        }
        if let Some(a) = f.ai {
            let _ = writeln!(out, "partner judgment: {a}");
        }
        if let Some(al) = &f.alignment {
            let kind = match al.kind {
                super::AlignmentKind::Aligned => "aligned",
                super::AlignmentKind::Divergent => "divergent",
                super::AlignmentKind::PartiallyAligned => "partially aligned",
            };
            let _ = writeln!(out, "alignment: {kind}");
        }
        if let Some(p) = &f.prediction {
            let _ = writeln!(out, "vote distribution: {}", distribution_text(&p.distribution));
            let _ = writeln!(out, "voted class: {}", self.class_name(p.class));
            if p.low_confidence {
                let _ = writeln!(out, "confidence: low");
            }
        }
        if let Some(t) = &f.trends {
            let words: Vec<String> =
                CHANNEL_NAMES.iter().zip(t).map(|(n, w)| alloc::format!("{n} {}", w.as_str())).collect();
            let _ = writeln!(out, "trends: {}", words.join(", "));
        }
        if let Some(agg) = &f.aggregates {
            if let Some(fr) = &agg.fractions {
                let mut parts = Vec::new();
                for i in 1..=ROUNDS {
                    for j in i + 1..=ROUNDS {
                        let k = super::pair_index(i, j).expect("valid pair");
                        parts.push(alloc::format!("{i}-{j} {:.2}", fr[k]));
                    }
                }
                let _ = writeln!(out, "past sessions ({}): {}", agg.count, parts.join(", "));
            }
        }
        for r in &f.rounds {
            let _ = writeln!(
                out,
                "round {}: voted {} ({})",
                r.round,
                self.class_name(r.class),
                distribution_text(&r.distribution)
            );
        }
        if let Some(s) = &f.score {
            let _ = writeln!(out, "agreement: {} of {} pairs, exact {}", s.pair_matches, s.total_pairs, s.exact);
        }
        out
    }

    pub fn rendered_len(&self) -> usize {
        self.render().chars().count()
    }
}

/// Retrieval query: the mode name plus non-flat trend words.
pub fn build_query(mode: Mode, facts: &SessionFacts) -> String {
    let mut q = mode.as_str().to_string();
    if let Some(t) = &facts.trends {
        for (name, w) in CHANNEL_NAMES.iter().zip(t) {
            if *w != TrendWord::Flat {
                let _ = write!(q, " {name} {}", w.as_str());
            }
        }
    }
    if let Some(al) = &facts.alignment {
        q.push_str(match al.kind {
            super::AlignmentKind::Aligned => " agree alignment",
            super::AlignmentKind::Divergent => " differ divergence",
            super::AlignmentKind::PartiallyAligned => " echo partial",
        });
    }
    q
}

fn round_facts(
    session: &Session,
    round: u8,
    trends: Option<&Channels>,
    cfg: &PromptConfig,
) -> Result<SessionFacts, DialogueError> {
    let mut facts = SessionFacts { round: Some(round), trends: trends.map(trend_words), ..SessionFacts::default() };
    facts.prediction = session.prediction(round).map(RoundFact::from_prediction);
    if round >= 2 {
        facts.human = session.tentative;
        facts.ai = ai_match_judgment(&session.ai_predictions, round, cfg.min_margin).ok();
        if let (Some(h), Some(a)) = (facts.human, facts.ai) {
            facts.alignment = Some(compute_alignment(h, a, &session.player_partition())?);
        }
    }
    Ok(facts)
}

/// Builds the prompt for `mode`, which must fit the session's phase.
pub fn assemble_prompt(
    mode: Mode,
    session: &Session,
    trends: Option<&Channels>,
    store: &StaticStore,
    aggregates: &Aggregates,
    persona: &Persona,
    cfg: &PromptConfig,
) -> Result<PromptBundle, DialogueError> {
    let mismatch = || DialogueError::ModePhase { mode, phase: session.phase };
    if Mode::for_phase(session.phase) != Some(mode) {
        return Err(mismatch());
    }
    let mut facts = match (mode, session.phase) {
        (Mode::Briefing, _) => SessionFacts::default(),
        (Mode::Round, SessionPhase::RoundDialogue(r) | SessionPhase::RoundConfirm(r)) => {
            round_facts(session, r, trends, cfg)?
        }
        (Mode::Debrief, _) => {
            let report = session.reveal.as_ref().ok_or_else(mismatch)?;
            let rounds = (1..=ROUNDS as u8)
                .map(|r| session.prediction(r).cloned().unwrap_or_else(|| AiPrediction::uniform(r)))
                .map(|p| RoundFact::from_prediction(&p))
                .collect();
            SessionFacts { rounds, score: Some(report.score), ..SessionFacts::default() }
        }
        _ => return Err(mismatch()),
    };
    if aggregates.count >= AGGREGATE_FLOOR {
        facts.aggregates = Some(aggregates.clone());
    }
    let query = build_query(mode, &facts);
    let snippets = store
        .retrieve(&query, mode, cfg.k)
        .into_iter()
        .filter_map(|s| {
            store.get(&s.doc_id).map(|d| Snippet {
                doc_id: s.doc_id.clone(),
                title: d.title.clone(),
                text: d.body.clone(),
                score: s.score,
            })
        })
        .collect();
    let mut bundle = PromptBundle {
        mode,
        persona_name: persona.name.clone(),
        preamble: persona.preamble.clone(),
        class_names: persona.class_names.clone(),
        snippets,
        facts,
        budget: cfg.budget,
    };
    fit_budget(&mut bundle)?;
    Ok(bundle)
}

/// Drops the weakest snippets, then shortens the preamble, until the
/// rendered prompt fits.
fn fit_budget(bundle: &mut PromptBundle) -> Result<(), DialogueError> {
    while bundle.rendered_len() > bundle.budget && bundle.snippets.pop().is_some() {}
    let over = bundle.rendered_len().saturating_sub(bundle.budget);
    if over > 0 {
        let keep = bundle.preamble.chars().count().saturating_sub(over);
        bundle.preamble = bundle.preamble.chars().take(keep).collect();
    }
    if bundle.rendered_len() > bundle.budget {
        return Err(DialogueError::BudgetTooSmall { budget: bundle.budget });
    }
    Ok(())
}
