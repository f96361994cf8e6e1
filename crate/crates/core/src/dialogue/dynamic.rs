//! Session memory and cross-session aggregates.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::DialogueError;
use crate::partition::{Judgment, Partition};
use crate::sensor::Channels;
use crate::session::{AiPrediction, UtteranceRecord};
use crate::ROUNDS;

/// Number of unordered round pairs.
pub const PAIRS: usize = ROUNDS * (ROUNDS - 1) / 2;

/// What happened in one round of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicRecord {
    pub session_id: String,
    pub round: u8,
    /// Per-channel least-squares slopes in units per second.
    pub trend_slopes: Option<Channels>,
    pub prediction: Option<AiPrediction>,
    pub human: Option<Judgment>,
    pub ai: Option<Judgment>,
    #[serde(default)]
    pub utterances: Vec<String>,
}

impl DynamicRecord {
    pub fn new(session_id: impl Into<String>, round: u8) -> Self {
        Self {
            session_id: session_id.into(),
            round,
            trend_slopes: None,
            prediction: None,
            human: None,
            ai: None,
            utterances: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), DialogueError> {
        if self.round == 0 || self.round as usize > ROUNDS {
            return Err(DialogueError::BadRecord { round: self.round, reason: "round out of range" });
        }
        if self.round == 1 && self.human.is_some() {
            return Err(DialogueError::BadRecord { round: 1, reason: "round 1 takes no judgment" });
        }
        for j in [self.human, self.ai].into_iter().flatten() {
            if self.round > 1 {
                j.validate_for_round(self.round as usize)?;
            }
        }
        Ok(())
    }
}

/// One line of the append-only dynamic log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum DynamicEntry {
    Started { session_id: String, sequence_id: String },
    Round { record: DynamicRecord },
    Utterance { session_id: String, utterance: UtteranceRecord },
    Completed { session_id: String, sequence_id: String, partition: Partition },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionMemory {
    pub sequence_id: Option<String>,
    pub rounds: BTreeMap<u8, DynamicRecord>,
    pub utterances: Vec<UtteranceRecord>,
    pub final_partition: Option<Partition>,
}

/// In-memory view of the dynamic log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DynamicStore {
    sessions: BTreeMap<String, SessionMemory>,
    log: Vec<DynamicEntry>,
}

impl DynamicStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a store from log entries.
    pub fn from_entries(entries: impl IntoIterator<Item = DynamicEntry>) -> Result<Self, DialogueError> {
        let mut store = Self::new();
        for e in entries {
            store.apply(e)?;
        }
        Ok(store)
    }

    pub fn apply(&mut self, entry: DynamicEntry) -> Result<(), DialogueError> {
        match &entry {
            DynamicEntry::Started { session_id, sequence_id } => {
                self.sessions.entry(session_id.clone()).or_default().sequence_id = Some(sequence_id.clone());
            }
            DynamicEntry::Round { record } => {
                record.validate()?;
                let mem = self.sessions.entry(record.session_id.clone()).or_default();
                let slot = mem
                    .rounds
                    .entry(record.round)
                    .or_insert_with(|| DynamicRecord::new(&record.session_id, record.round));
                // later records overwrite fields they carry
                if record.trend_slopes.is_some() {
                    slot.trend_slopes = record.trend_slopes;
                }
                if record.prediction.is_some() {
                    slot.prediction = record.prediction.clone();
                }
                if record.human.is_some() {
                    slot.human = record.human;
                }
                if record.ai.is_some() {
                    slot.ai = record.ai;
                }
                slot.utterances.extend(record.utterances.iter().cloned());
            }
            DynamicEntry::Utterance { session_id, utterance } => {
                let mem = self.sessions.entry(session_id.clone()).or_default();
                if let Some(round) = utterance.round {
                    mem.rounds
                        .entry(round)
                        .or_insert_with(|| DynamicRecord::new(session_id, round))
                        .utterances
                        .push(utterance.text.clone());
                }
                mem.utterances.push(utterance.clone());
            }
            DynamicEntry::Completed { session_id, sequence_id, partition } => {
                let mem = self.sessions.entry(session_id.clone()).or_default();
                mem.sequence_id = Some(sequence_id.clone());
                mem.final_partition = Some(partition.clone());
            }
        }
        self.log.push(entry);
        Ok(())
    }

    pub fn session(&self, session_id: &str) -> Option<&SessionMemory> {
        self.sessions.get(session_id)
    }

    pub fn entries(&self) -> &[DynamicEntry] {
        &self.log
    }

    /// Final partitions of completed sessions played on `sequence_id`.
    pub fn completed_partitions<'a>(&'a self, sequence_id: &'a str) -> impl Iterator<Item = &'a Partition> + 'a {
        self.sessions
            .values()
            .filter(move |m| m.sequence_id.as_deref() == Some(sequence_id))
            .filter_map(|m| m.final_partition.as_ref())
    }
}

/// Index of the pair `(i, j)` of 1-based rounds, `i < j`, in the order
/// (1,2), (1,3), ..., (4,5).
pub fn pair_index(i: usize, j: usize) -> Option<usize> {
    if i == 0 || i >= j || j > ROUNDS {
        return None;
    }
    let before: usize = (1..i).map(|a| ROUNDS - a).sum();
    Some(before + (j - i - 1))
}

/// Fraction of past sessions that grouped each pair of rounds together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub count: u32,
    /// `None` when no sessions have completed.
    pub fractions: Option<[f64; PAIRS]>,
}

impl Aggregates {
    pub fn empty() -> Self {
        Self { count: 0, fractions: None }
    }

    pub fn fraction(&self, i: usize, j: usize) -> Option<f64> {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.fractions.as_ref().and_then(|f| pair_index(i, j).map(|k| f[k]))
    }
}

pub fn aggregate_partitions<'a>(partitions: impl IntoIterator<Item = &'a Partition>) -> Aggregates {
    let mut counts = [0u32; PAIRS];
    let mut total = 0u32;
    for p in partitions {
        if p.len() != ROUNDS {
            continue;
        }
        total += 1;
        for i in 1..=ROUNDS {
            for j in i + 1..=ROUNDS {
                if p.same_group(i - 1, j - 1) {
                    counts[pair_index(i, j).expect("valid pair")] += 1;
                }
            }
        }
    }
    if total == 0 {
        return Aggregates::empty();
    }
    Aggregates { count: total, fractions: Some(core::array::from_fn(|k| counts[k] as f64 / total as f64)) }
}

pub fn aggregate_stats(store: &DynamicStore, sequence_id: &str) -> Aggregates {
    aggregate_partitions(store.completed_partitions(sequence_id))
}
