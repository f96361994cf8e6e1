//! Turn-based game session with an append-only event log.
//!
//! Every accepted action appends exactly one [`SessionEvent`]; the session
//! state is a pure fold over those events, so [`replay`] rebuilds a live
//! session field for field. Rejected actions leave the session untouched.

mod phase;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::diagram::{render_prefix, PatternDiagram};
use crate::dialogue::Mode;
use crate::partition::{compare_patterns, fold_judgments, AgreementScore, Judgment, Partition, PartitionError};
use crate::{NUM_CLASSES, ROUNDS};

pub use phase::SessionPhase;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("unknown token {0:?}")]
    NotFound(String),
    #[error("action {action} is not allowed in phase {phase}")]
    Protocol { phase: SessionPhase, action: &'static str },
    #[error(transparent)]
    InvalidJudgment(#[from] PartitionError),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("corrupt event log at seq_no {seq_no}: {reason}")]
    CorruptLog { seq_no: u64, reason: String },
}

/// A predefined incense order and its correct pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSequence", into = "RawSequence")]
pub struct ScentSequence {
    id: String,
    labels: [u8; ROUNDS],
    truth: Partition,
}

#[derive(Serialize, Deserialize)]
struct RawSequence {
    id: String,
    labels: [u8; ROUNDS],
}

impl TryFrom<RawSequence> for ScentSequence {
    type Error = SessionError;
    fn try_from(raw: RawSequence) -> Result<Self, Self::Error> {
        ScentSequence::new(raw.id, raw.labels)
    }
}

impl From<ScentSequence> for RawSequence {
    fn from(s: ScentSequence) -> Self {
        RawSequence { id: s.id, labels: s.labels }
    }
}

impl ScentSequence {
    pub fn new(id: impl Into<String>, labels: [u8; ROUNDS]) -> Result<Self, SessionError> {
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(SessionError::InvalidSequence(alloc::format!("class label {bad} out of range")));
        }
        let truth = Partition::from_labels(&labels)?;
        Ok(Self { id: id.into(), labels, truth })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn labels(&self) -> &[u8; ROUNDS] {
        &self.labels
    }

    pub fn truth(&self) -> &Partition {
        &self.truth
    }
}

/// Resolves tokens (and, for replay, sequence ids) to scent sequences.
pub trait SequenceRegistry {
    fn by_token(&self, token: &str) -> Option<ScentSequence>;
    fn by_id(&self, sequence_id: &str) -> Option<ScentSequence>;
}

/// Plain token → sequence map.
impl SequenceRegistry for BTreeMap<String, ScentSequence> {
    fn by_token(&self, token: &str) -> Option<ScentSequence> {
        self.get(token).cloned()
    }

    fn by_id(&self, sequence_id: &str) -> Option<ScentSequence> {
        self.values().find(|s| s.id == sequence_id).cloned()
    }
}

/// The partner's sensed verdict for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiPrediction {
    pub round: u8,
    /// Normalised class distribution used for dialogue and matching.
    pub probs: [f64; NUM_CLASSES],
    pub votes: [u32; NUM_CLASSES],
    pub windows: u32,
    /// Set when the stream ended before one full window was seen.
    pub low_confidence: bool,
}

impl AiPrediction {
    /// Uniform distribution with no votes.
    pub fn uniform(round: u8) -> Self {
        Self {
            round,
            probs: [1.0 / NUM_CLASSES as f64; NUM_CLASSES],
            votes: [0; NUM_CLASSES],
            windows: 0,
            low_confidence: true,
        }
    }

    /// Voted class (lowest index on ties), or the probability argmax when no
    /// windows were voted.
    pub fn class(&self) -> usize {
        if self.windows > 0 {
            argmax_by(&self.votes, |a, b| a > b)
        } else {
            argmax_by(&self.probs, |a, b| a > b)
        }
    }
}

pub(crate) fn argmax_by<T: Copy>(values: &[T], greater: impl Fn(T, T) -> bool) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if greater(values[i], values[best]) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub mode: Mode,
    pub round: Option<u8>,
    pub text: String,
}

/// Everything a player or the server can ask a session to do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    StartCalibration,
    NextCalibration { baseline_recording: Option<String> },
    FinishCalibration { baseline_recording: Option<String> },
    DoneSmelling,
    ProposeJudgment { judgment: Judgment },
    ReviseJudgment { judgment: Judgment },
    FinishDialogue,
    ConfirmJudgment,
    RecordPrediction { prediction: AiPrediction },
    RecordUtterance { utterance: UtteranceRecord },
    Reveal,
    Close,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::StartCalibration => "start_calibration",
            Action::NextCalibration { .. } => "next_calibration",
            Action::FinishCalibration { .. } => "finish_calibration",
            Action::DoneSmelling => "done_smelling",
            Action::ProposeJudgment { .. } => "propose_judgment",
            Action::ReviseJudgment { .. } => "revise_judgment",
            Action::FinishDialogue => "finish_dialogue",
            Action::ConfirmJudgment => "confirm_judgment",
            Action::RecordPrediction { .. } => "record_prediction",
            Action::RecordUtterance { .. } => "record_utterance",
            Action::Reveal => "reveal",
            Action::Close => "close",
        }
    }
}

/// Player pattern against the correct one, produced once at the reveal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevealReport {
    pub player: Partition,
    pub truth: Partition,
    pub player_diagram: PatternDiagram,
    pub truth_diagram: PatternDiagram,
    pub score: AgreementScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Created {
        session_id: String,
        token: String,
        sequence_id: String,
    },
    PhaseAdvanced {
        action: Action,
        from: SessionPhase,
        to: SessionPhase,
    },
    JudgmentProposed {
        round: u8,
        judgment: Judgment,
    },
    JudgmentRevised {
        round: u8,
        judgment: Judgment,
    },
    /// `judgment` is `None` only for round 1, which has nothing to judge.
    JudgmentConfirmed {
        round: u8,
        judgment: Option<Judgment>,
        to: SessionPhase,
    },
    AiPredictionRecorded {
        prediction: AiPrediction,
    },
    UtteranceEmitted {
        utterance: UtteranceRecord,
    },
    Revealed {
        report: RevealReport,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq_no: u64,
    pub timestamp_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub token: String,
    pub sequence: ScentSequence,
    pub phase: SessionPhase,
    pub tentative: Option<Judgment>,
    pub confirmed: Vec<Judgment>,
    /// Indexed by round - 1.
    pub ai_predictions: [Option<AiPrediction>; ROUNDS],
    /// Baseline recording id tagged per calibration sample.
    pub baselines: [Option<String>; ROUNDS],
    pub reveal: Option<RevealReport>,
    pub events: Vec<SessionEvent>,
    pub created_at: u64,
}

/// Starts a session for a registered token.
pub fn create_session(
    session_id: impl Into<String>,
    token: &str,
    registry: &impl SequenceRegistry,
    now_ms: u64,
) -> Result<Session, SessionError> {
    let sequence = registry.by_token(token).ok_or_else(|| SessionError::NotFound(token.to_string()))?;
    Ok(Session::start(session_id.into(), token.to_string(), sequence, now_ms))
}

impl Session {
    fn start(session_id: String, token: String, sequence: ScentSequence, now_ms: u64) -> Self {
        let created = SessionEvent {
            seq_no: 0,
            timestamp_ms: now_ms,
            kind: EventKind::Created {
                session_id: session_id.clone(),
                token: token.clone(),
                sequence_id: sequence.id.clone(),
            },
        };
        Session {
            session_id,
            token,
            sequence,
            phase: SessionPhase::Briefing,
            tentative: None,
            confirmed: Vec::new(),
            ai_predictions: Default::default(),
            baselines: Default::default(),
            reveal: None,
            events: alloc::vec![created],
            created_at: now_ms,
        }
    }

    /// Applies an action, appending one event. On error nothing changes.
    pub fn apply(&mut self, action: Action, now_ms: u64) -> Result<&SessionEvent, SessionError> {
        let kind = self.plan(&action)?;
        self.commit(kind, now_ms);
        Ok(self.events.last().expect("event just pushed"))
    }

    /// Functional form of [`Session::apply`].
    pub fn advance(&self, action: Action, now_ms: u64) -> Result<Session, SessionError> {
        let mut next = self.clone();
        next.apply(action, now_ms)?;
        Ok(next)
    }

    pub fn propose_judgment(&mut self, judgment: Judgment, now_ms: u64) -> Result<(), SessionError> {
        self.apply(Action::ProposeJudgment { judgment }, now_ms).map(drop)
    }

    pub fn revise_judgment(&mut self, judgment: Judgment, now_ms: u64) -> Result<(), SessionError> {
        self.apply(Action::ReviseJudgment { judgment }, now_ms).map(drop)
    }

    pub fn confirm_judgment(&mut self, now_ms: u64) -> Result<(), SessionError> {
        self.apply(Action::ConfirmJudgment, now_ms).map(drop)
    }

    /// Performs the reveal, moving the session to debrief.
    pub fn reveal(&mut self, now_ms: u64) -> Result<RevealReport, SessionError> {
        self.apply(Action::Reveal, now_ms)?;
        Ok(self.reveal.clone().expect("set by reveal"))
    }

    /// Partition over round 1 and every confirmed round.
    pub fn player_partition(&self) -> Partition {
        fold_judgments(&self.confirmed).expect("confirmed judgments are validated on entry")
    }

    /// Diagram over the confirmed prefix.
    pub fn current_genjimon(&self) -> Result<PatternDiagram, SessionError> {
        match self.phase {
            SessionPhase::Briefing | SessionPhase::Calibration(_) => {
                Err(SessionError::Protocol { phase: self.phase, action: "current_genjimon" })
            }
            _ => Ok(render_prefix(&self.player_partition())),
        }
    }

    pub fn last_seq_no(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq_no)
    }

    pub fn prediction(&self, round: u8) -> Option<&AiPrediction> {
        self.ai_predictions.get(round as usize - 1)?.as_ref()
    }

    fn protocol(&self, action: &Action) -> SessionError {
        SessionError::Protocol { phase: self.phase, action: action.name() }
    }

    /// Decides the event an action would produce without mutating anything.
    fn plan(&self, action: &Action) -> Result<EventKind, SessionError> {
        use SessionPhase as P;
        let advance = |to: SessionPhase| EventKind::PhaseAdvanced { action: action.clone(), from: self.phase, to };
        let last = ROUNDS as u8;
        match (action, self.phase) {
            (Action::StartCalibration, P::Briefing) => Ok(advance(P::Calibration(1))),
            (Action::NextCalibration { .. }, P::Calibration(i)) if i < last => Ok(advance(P::Calibration(i + 1))),
            (Action::FinishCalibration { .. }, P::Calibration(i)) if i == last => Ok(advance(P::RoundSmelling(1))),
            (Action::DoneSmelling, P::RoundSmelling(1)) => Ok(advance(P::RoundDialogue(1))),
            (Action::DoneSmelling, P::RoundSmelling(r)) => Ok(advance(P::RoundJudgment(r))),
            (Action::ProposeJudgment { judgment }, P::RoundJudgment(r)) => {
                judgment.validate_for_round(r as usize)?;
                Ok(EventKind::JudgmentProposed { round: r, judgment: *judgment })
            }
            (Action::ReviseJudgment { judgment }, P::RoundDialogue(r) | P::RoundConfirm(r))
                if self.tentative.is_some() =>
            {
                judgment.validate_for_round(r as usize)?;
                Ok(EventKind::JudgmentRevised { round: r, judgment: *judgment })
            }
            (Action::FinishDialogue, P::RoundDialogue(r)) => Ok(advance(P::RoundConfirm(r))),
            (Action::ConfirmJudgment, P::RoundConfirm(r)) if r == 1 || self.tentative.is_some() => {
                let to = if r == last { P::Reveal } else { P::RoundSmelling(r + 1) };
                Ok(EventKind::JudgmentConfirmed { round: r, judgment: self.tentative, to })
            }
            (Action::RecordPrediction { prediction }, P::RoundSmelling(r) | P::RoundJudgment(r))
                if prediction.round == r =>
            {
                Ok(EventKind::AiPredictionRecorded { prediction: prediction.clone() })
            }
            (Action::RecordUtterance { utterance }, phase) if mode_allowed(utterance.mode, phase) => {
                Ok(EventKind::UtteranceEmitted { utterance: utterance.clone() })
            }
            (Action::Reveal, P::Reveal) => {
                let player = self.player_partition();
                let truth = self.sequence.truth.clone();
                let score = compare_patterns(&player, &truth)?;
                Ok(EventKind::Revealed {
                    report: RevealReport {
                        player_diagram: render_prefix(&player),
                        truth_diagram: render_prefix(&truth),
                        player,
                        truth,
                        score,
                    },
                })
            }
            (Action::Close, P::Debrief) => Ok(advance(P::Closed)),
            _ => Err(self.protocol(action)),
        }
    }

    /// Folds one already-validated event into the state.
    fn commit(&mut self, kind: EventKind, now_ms: u64) {
        match &kind {
            EventKind::Created { .. } => {}
            EventKind::PhaseAdvanced { action, to, .. } => {
                if let (
                    Action::NextCalibration { baseline_recording } | Action::FinishCalibration { baseline_recording },
                    SessionPhase::Calibration(i),
                ) = (action, self.phase)
                {
                    self.baselines[i as usize - 1] = baseline_recording.clone();
                }
                self.phase = *to;
            }
            EventKind::JudgmentProposed { round, judgment } => {
                self.tentative = Some(*judgment);
                self.phase = SessionPhase::RoundDialogue(*round);
            }
            EventKind::JudgmentRevised { judgment, .. } => self.tentative = Some(*judgment),
            EventKind::JudgmentConfirmed { judgment, to, .. } => {
                if let Some(j) = judgment {
                    self.confirmed.push(*j);
                }
                self.tentative = None;
                self.phase = *to;
            }
            EventKind::AiPredictionRecorded { prediction } => {
                self.ai_predictions[prediction.round as usize - 1] = Some(prediction.clone());
            }
            EventKind::UtteranceEmitted { .. } => {}
            EventKind::Revealed { report } => {
                self.reveal = Some(report.clone());
                self.phase = SessionPhase::Debrief;
            }
        }
        let seq_no = self.events.len() as u64;
        self.events.push(SessionEvent { seq_no, timestamp_ms: now_ms, kind });
    }
}

fn mode_allowed(mode: Mode, phase: SessionPhase) -> bool {
    matches!(
        (mode, phase),
        (Mode::Briefing, SessionPhase::Briefing)
            | (Mode::Round, SessionPhase::RoundDialogue(_) | SessionPhase::RoundConfirm(_))
            | (Mode::Debrief, SessionPhase::Debrief)
    )
}

/// The action that, applied to the pre-event state, must reproduce `kind`.
fn action_for(kind: &EventKind) -> Option<Action> {
    Some(match kind {
        EventKind::Created { .. } => return None,
        EventKind::PhaseAdvanced { action, .. } => action.clone(),
        EventKind::JudgmentProposed { judgment, .. } => Action::ProposeJudgment { judgment: *judgment },
        EventKind::JudgmentRevised { judgment, .. } => Action::ReviseJudgment { judgment: *judgment },
        EventKind::JudgmentConfirmed { .. } => Action::ConfirmJudgment,
        EventKind::AiPredictionRecorded { prediction } => Action::RecordPrediction { prediction: prediction.clone() },
        EventKind::UtteranceEmitted { utterance } => Action::RecordUtterance { utterance: utterance.clone() },
        EventKind::Revealed { .. } => Action::Reveal,
    })
}

/// Rebuilds a session from its event log, re-validating every transition.
pub fn replay(events: &[SessionEvent], registry: &impl SequenceRegistry) -> Result<Session, SessionError> {
    let corrupt = |seq_no: u64, reason: &str| SessionError::CorruptLog { seq_no, reason: reason.to_string() };
    let first = events.first().ok_or_else(|| corrupt(0, "empty history"))?;
    let EventKind::Created { session_id, token, sequence_id } = &first.kind else {
        return Err(corrupt(first.seq_no, "history does not start with creation"));
    };
    if first.seq_no != 0 {
        return Err(corrupt(first.seq_no, "creation event must have seq_no 0"));
    }
    let sequence = registry.by_id(sequence_id).ok_or_else(|| corrupt(0, "unknown sequence id"))?;
    let mut session = Session::start(session_id.clone(), token.clone(), sequence, first.timestamp_ms);

    for (expected, event) in (1u64..).zip(&events[1..]) {
        if event.seq_no != expected {
            return Err(corrupt(event.seq_no, "gap or reordering in seq_no"));
        }
        let action = action_for(&event.kind).ok_or_else(|| corrupt(event.seq_no, "duplicate creation event"))?;
        let planned = session
            .plan(&action)
            .map_err(|e| SessionError::CorruptLog { seq_no: event.seq_no, reason: e.to_string() })?;
        if planned != event.kind {
            return Err(corrupt(event.seq_no, "event does not match the transition it records"));
        }
        session.commit(planned, event.timestamp_ms);
    }
    Ok(session)
}
