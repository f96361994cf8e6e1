//! Per-session message handling: plan on a copy, persist, then commit.

use std::sync::{Arc, Mutex};

use genji_core::classifier::VoteMode;
use genji_core::diagram::render_prefix;
use genji_core::dialogue::{
    ai_match_judgment, assemble_prompt, DialogueError, DynamicEntry, DynamicRecord, GenerateError, Mode, Persona,
    PromptConfig, StaticStore, TextGenerator, Utterance,
};
use genji_core::partition::{fold_judgments, Judgment};
use genji_core::sensor::{Channels, SensorFrame, NOMINAL_RATE_HZ};
use genji_core::session::{Action, AiPrediction, EventKind, Session, SessionError, SessionEvent, SessionPhase};
use genji_core::ROUNDS;

use super::protocol::{
    parse_client, ClientMessage, ErrorPayload, GenjimonPayload, PhasePayload, PredictionPayload, ProtocolError,
    ServerMessage,
};
use crate::eventlog::{JsonlWriter, LogError};
use crate::memory::{MemoryError, MemoryStore};
use crate::sensing::{SharedClassifier, StreamingPredictor};

/// Durable destination for accepted events.
pub trait EventSink: Send {
    fn append(&mut self, events: &[SessionEvent]) -> Result<(), LogError>;
}

impl EventSink for JsonlWriter {
    fn append(&mut self, events: &[SessionEvent]) -> Result<(), LogError> {
        JsonlWriter::append(self, events)
    }
}

/// Discards events.
#[derive(Debug, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn append(&mut self, _: &[SessionEvent]) -> Result<(), LogError> {
        Ok(())
    }
}

/// Shared dialogue dependencies.
pub struct Services {
    pub store: StaticStore,
    pub persona: Persona,
    pub generator: Box<dyn TextGenerator + Send + Sync>,
    pub memory: Mutex<MemoryStore>,
    pub prompt: PromptConfig,
    pub vote_mode: VoteMode,
}

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Dialogue(#[from] DialogueError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("event log write failed: {0}")]
    Log(#[from] LogError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("sensing: {0}")]
    Sensing(String),
}

impl ControlError {
    pub fn code(&self) -> &'static str {
        match self {
            ControlError::Protocol(p) => p.code,
            ControlError::Session(SessionError::Protocol { .. }) => "phase",
            ControlError::Session(SessionError::InvalidJudgment(_)) => "invalid_judgment",
            ControlError::Session(_) => "session",
            ControlError::Dialogue(_) => "dialogue",
            ControlError::Generate(_) => "generation",
            ControlError::Log(_) | ControlError::Memory(_) => "storage",
            ControlError::Sensing(_) => "sensing",
        }
    }

    pub fn payload(&self, phase: Option<SessionPhase>) -> ErrorPayload {
        let retry_after_s = match self {
            ControlError::Generate(g) => g.retry_after_s,
            _ => None,
        };
        ErrorPayload { code: self.code().into(), message: self.to_string(), phase, retry_after_s }
    }
}

/// Messages to broadcast, each tagged with the `seq_no` of the event it
/// reports.
pub type Outgoing = Vec<(u64, ServerMessage)>;

pub struct SessionController {
    session: Session,
    sink: Box<dyn EventSink>,
    services: Arc<Services>,
    sensing: Option<StreamingPredictor>,
    trends: [Option<Channels>; ROUNDS],
}

/// Working copy for one message.
struct Draft {
    session: Session,
    memory: Vec<DynamicEntry>,
    utterances: Vec<Utterance>,
    trends: [Option<Channels>; ROUNDS],
}

impl Draft {
    fn apply(&mut self, action: Action, now_ms: u64) -> Result<(), SessionError> {
        self.session.apply(action, now_ms).map(drop)
    }
}

impl SessionController {
    pub fn new(session: Session, sink: Box<dyn EventSink>, services: Arc<Services>) -> Self {
        let mut trends: [Option<Channels>; ROUNDS] = Default::default();
        if let Some(mem) = services.memory.lock().expect("memory lock").store().session(&session.session_id) {
            for (r, rec) in &mem.rounds {
                trends[*r as usize - 1] = rec.trend_slopes;
            }
        }
        Self { session, sink, services, sensing: None, trends }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn phase(&self) -> SessionPhase {
        self.session.phase
    }

    /// Current phase and, past calibration, the partial genji-mon.
    pub fn snapshot(&self) -> Outgoing {
        let seq = self.session.last_seq_no();
        let mut out = vec![(seq, ServerMessage::Phase(self.phase_payload(self.session.phase)))];
        if let Ok(d) = self.session.current_genjimon() {
            out.push((seq, ServerMessage::Genjimon(GenjimonPayload::new(self.session.player_partition().id(), &d))));
        }
        if let Some(report) = &self.session.reveal {
            out.push((seq, ServerMessage::Reveal(report.clone())));
        }
        out
    }

    fn phase_payload(&self, phase: SessionPhase) -> PhasePayload {
        PhasePayload {
            phase,
            round: phase.round(),
            tentative: self.session.tentative,
            confirmed: self.session.confirmed.clone(),
        }
    }

    pub fn handle_text(&mut self, text: &str, now_ms: u64) -> Result<Outgoing, ControlError> {
        let msg = parse_client(text)?;
        self.handle(msg, now_ms)
    }

    /// Applies one client message atomically. On error nothing is written
    /// and the session is unchanged.
    pub fn handle(&mut self, msg: ClientMessage, now_ms: u64) -> Result<Outgoing, ControlError> {
        use SessionPhase as P;
        let mut d =
            Draft { session: self.session.clone(), memory: Vec::new(), utterances: Vec::new(), trends: self.trends };
        let phase = d.session.phase;
        let protocol = |action: &'static str| SessionError::Protocol { phase, action };
        match msg {
            ClientMessage::StartCalibration => d.apply(Action::StartCalibration, now_ms)?,
            ClientMessage::CalibrationNext { baseline_recording } => {
                let action = if phase == P::Calibration(ROUNDS as u8) {
                    Action::FinishCalibration { baseline_recording }
                } else {
                    Action::NextCalibration { baseline_recording }
                };
                d.apply(action, now_ms)?;
            }
            ClientMessage::DoneSmelling => {
                let P::RoundSmelling(r) = phase else { return Err(protocol("done_smelling").into()) };
                let sensing = self.sensing.as_ref().filter(|s| s.round() == r);
                let prediction =
                    sensing.map_or_else(|| AiPrediction::uniform(r), |s| s.finish(self.services.vote_mode));
                let slopes = sensing.and_then(|s| s.trend_slopes());
                d.trends[r as usize - 1] = slopes;
                d.apply(Action::RecordPrediction { prediction: prediction.clone() }, now_ms)?;
                d.apply(Action::DoneSmelling, now_ms)?;
                let mut record = DynamicRecord::new(&d.session.session_id, r);
                record.trend_slopes = slopes;
                record.prediction = Some(prediction);
                if r > 1 {
                    record.ai = ai_match_judgment(&d.session.ai_predictions, r, self.services.prompt.min_margin).ok();
                }
                d.memory.push(DynamicEntry::Round { record });
                if r == 1 {
                    self.speak(&mut d, Mode::Round, now_ms)?;
                    d.apply(Action::FinishDialogue, now_ms)?;
                }
            }
            ClientMessage::ProposeJudgment { judgment } => {
                d.apply(Action::ProposeJudgment { judgment }, now_ms)?;
                self.speak(&mut d, Mode::Round, now_ms)?;
                d.apply(Action::FinishDialogue, now_ms)?;
            }
            ClientMessage::ReviseJudgment { judgment } => {
                d.apply(Action::ReviseJudgment { judgment }, now_ms)?;
                self.speak(&mut d, Mode::Round, now_ms)?;
                if matches!(d.session.phase, P::RoundDialogue(_)) {
                    d.apply(Action::FinishDialogue, now_ms)?;
                }
            }
            ClientMessage::ConfirmJudgment => {
                let P::RoundConfirm(r) = phase else { return Err(protocol("confirm_judgment").into()) };
                let human = d.session.tentative;
                d.apply(Action::ConfirmJudgment, now_ms)?;
                if let Some(h) = human.filter(|_| r > 1) {
                    let mut record = DynamicRecord::new(&d.session.session_id, r);
                    record.human = Some(h);
                    d.memory.push(DynamicEntry::Round { record });
                }
                if d.session.phase == P::Reveal {
                    d.apply(Action::Reveal, now_ms)?;
                    let report = d.session.reveal.clone().expect("revealed");
                    d.memory.push(DynamicEntry::Completed {
                        session_id: d.session.session_id.clone(),
                        sequence_id: d.session.sequence.id().to_string(),
                        partition: report.player,
                    });
                    self.speak(&mut d, Mode::Debrief, now_ms)?;
                }
            }
            ClientMessage::RequestDialogue => match phase {
                P::Briefing => self.speak(&mut d, Mode::Briefing, now_ms)?,
                P::RoundDialogue(_) => {
                    self.speak(&mut d, Mode::Round, now_ms)?;
                    d.apply(Action::FinishDialogue, now_ms)?;
                }
                P::RoundConfirm(_) => self.speak(&mut d, Mode::Round, now_ms)?,
                P::Debrief => self.speak(&mut d, Mode::Debrief, now_ms)?,
                _ => return Err(protocol("request_dialogue").into()),
            },
            ClientMessage::AcknowledgeReveal => d.apply(Action::Close, now_ms)?,
        }
        self.commit(d)
    }

    /// Generates an utterance for the draft's current state and records it.
    fn speak(&self, d: &mut Draft, mode: Mode, now_ms: u64) -> Result<(), ControlError> {
        let session = &d.session;
        let trends = session.phase.round().and_then(|r| d.trends[r as usize - 1]);
        let aggregates = self.services.memory.lock().expect("memory lock").aggregates(session.sequence.id());
        let bundle = assemble_prompt(
            mode,
            session,
            trends.as_ref(),
            &self.services.store,
            &aggregates,
            &self.services.persona,
            &self.services.prompt,
        )?;
        let text = self.services.generator.generate(&bundle)?;
        let utterance = Utterance { mode, round: bundle.facts.round, text, audio_url: None };
        d.apply(Action::RecordUtterance { utterance: utterance.record() }, now_ms)?;
        d.memory
            .push(DynamicEntry::Utterance { session_id: d.session.session_id.clone(), utterance: utterance.record() });
        d.utterances.push(utterance);
        Ok(())
    }

    fn commit(&mut self, d: Draft) -> Result<Outgoing, ControlError> {
        let old_len = self.session.events.len();
        self.sink.append(&d.session.events[old_len..])?;
        let mut out = Vec::new();
        let mut utterances = d.utterances.into_iter();
        let mut phase = self.session.phase;
        let mut tentative = self.session.tentative;
        let mut confirmed = self.session.confirmed.clone();
        let phase_msg = |phase: SessionPhase, tentative: Option<Judgment>, confirmed: &Vec<Judgment>| {
            ServerMessage::Phase(PhasePayload { phase, round: phase.round(), tentative, confirmed: confirmed.clone() })
        };
        let genjimon = |confirmed: &[Judgment]| {
            let p = fold_judgments(confirmed).expect("confirmed judgments are valid");
            ServerMessage::Genjimon(GenjimonPayload::new(p.id(), &render_prefix(&p)))
        };
        for e in &d.session.events[old_len..] {
            let seq = e.seq_no;
            match &e.kind {
                EventKind::Created { .. } => {}
                EventKind::PhaseAdvanced { to, .. } => {
                    let entering_rounds =
                        matches!(phase, SessionPhase::Calibration(_)) && *to == SessionPhase::RoundSmelling(1);
                    phase = *to;
                    out.push((seq, phase_msg(phase, tentative, &confirmed)));
                    if entering_rounds {
                        out.push((seq, genjimon(&confirmed)));
                    }
                }
                EventKind::JudgmentProposed { round, judgment } => {
                    phase = SessionPhase::RoundDialogue(*round);
                    tentative = Some(*judgment);
                    out.push((seq, phase_msg(phase, tentative, &confirmed)));
                }
                EventKind::JudgmentRevised { judgment, .. } => {
                    tentative = Some(*judgment);
                    out.push((seq, phase_msg(phase, tentative, &confirmed)));
                }
                EventKind::JudgmentConfirmed { judgment, to, .. } => {
                    confirmed.extend(*judgment);
                    tentative = None;
                    phase = *to;
                    out.push((seq, phase_msg(phase, tentative, &confirmed)));
                    out.push((seq, genjimon(&confirmed)));
                }
                EventKind::AiPredictionRecorded { prediction } => {
                    out.push((seq, ServerMessage::PredictionUpdate(PredictionPayload::from_final(prediction))));
                }
                EventKind::UtteranceEmitted { .. } => {
                    let u = utterances.next().expect("one utterance per emitted event");
                    out.push((seq, ServerMessage::Utterance(u)));
                }
                EventKind::Revealed { report } => {
                    phase = SessionPhase::Debrief;
                    out.push((seq, ServerMessage::Reveal(report.clone())));
                    out.push((seq, phase_msg(phase, tentative, &confirmed)));
                }
            }
        }
        let leaving_smelling = !matches!(d.session.phase, SessionPhase::RoundSmelling(_));
        self.session = d.session;
        self.trends = d.trends;
        if leaving_smelling {
            self.sensing = None;
        }
        let mut memory = self.services.memory.lock().expect("memory lock");
        for entry in d.memory {
            // the session log is authoritative; memory is best effort
            if let Err(e) = memory.append(entry) {
                eprintln!("memory write failed: {e}");
            }
        }
        Ok(out)
    }

    /// Starts live inference for the current smelling round.
    pub fn start_sensing(&mut self, classifier: SharedClassifier) -> Result<u8, ControlError> {
        let SessionPhase::RoundSmelling(r) = self.session.phase else {
            return Err(ControlError::Sensing(format!("no round is being smelled in phase {}", self.session.phase)));
        };
        self.sensing = Some(StreamingPredictor::new(classifier, r, NOMINAL_RATE_HZ));
        Ok(r)
    }

    pub fn sensing_round(&self) -> Option<u8> {
        self.sensing.as_ref().map(StreamingPredictor::round)
    }

    /// Feeds one frame; returns an update when a window completes. Updates
    /// are not logged and carry the session's latest `seq_no`.
    pub fn push_frame(&mut self, round: u8, frame: SensorFrame) -> Result<Option<(u64, ServerMessage)>, ControlError> {
        let Some(p) = self.sensing.as_mut().filter(|p| p.round() == round) else { return Ok(None) };
        let update = p.push(frame).map_err(|e| ControlError::Sensing(e.to_string()))?;
        Ok(update.map(|u| {
            let payload = PredictionPayload {
                round: u.round,
                windows: u.total,
                probs: u.prediction.probs,
                votes: u.votes,
                is_final: false,
                stream_ended: false,
            };
            (self.session.last_seq_no(), ServerMessage::PredictionUpdate(payload))
        }))
    }

    /// Marks the end of the round's stream.
    pub fn stream_ended(&self, round: u8) -> Option<(u64, ServerMessage)> {
        let p = self.sensing.as_ref().filter(|p| p.round() == round)?;
        let v = p.vote();
        let payload = PredictionPayload {
            round,
            windows: v.total,
            probs: v.distribution(self.services.vote_mode),
            votes: v.counts,
            is_final: false,
            stream_ended: true,
        };
        Some((self.session.last_seq_no(), ServerMessage::PredictionUpdate(payload)))
    }
}
