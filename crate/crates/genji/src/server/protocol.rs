//! JSON messages exchanged over `/ws/{session_id}`.

use genji_core::diagram::{PatternDiagram, Segment};
use genji_core::dialogue::Utterance;
use genji_core::partition::Judgment;
use genji_core::session::{AiPrediction, RevealReport, SessionPhase};
use genji_core::NUM_CLASSES;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: u32 = 1;

/// Envelope shared by both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub session_id: String,
    #[serde(default)]
    pub seq_no: u64,
    #[serde(default)]
    pub payload: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientMessage {
    StartCalibration,
    CalibrationNext { baseline_recording: Option<String> },
    DoneSmelling,
    ProposeJudgment { judgment: Judgment },
    ReviseJudgment { judgment: Judgment },
    ConfirmJudgment,
    RequestDialogue,
    AcknowledgeReveal,
}

impl ClientMessage {
    pub const TYPES: [&'static str; 8] = [
        "start_calibration",
        "calibration_next",
        "done_smelling",
        "propose_judgment",
        "revise_judgment",
        "confirm_judgment",
        "request_dialogue",
        "acknowledge_reveal",
    ];

    pub fn type_name(&self) -> &'static str {
        match self {
            ClientMessage::StartCalibration => "start_calibration",
            ClientMessage::CalibrationNext { .. } => "calibration_next",
            ClientMessage::DoneSmelling => "done_smelling",
            ClientMessage::ProposeJudgment { .. } => "propose_judgment",
            ClientMessage::ReviseJudgment { .. } => "revise_judgment",
            ClientMessage::ConfirmJudgment => "confirm_judgment",
            ClientMessage::RequestDialogue => "request_dialogue",
            ClientMessage::AcknowledgeReveal => "acknowledge_reveal",
        }
    }

    pub fn to_wire(&self, session_id: &str) -> WireMessage {
        let payload = match self {
            ClientMessage::CalibrationNext { baseline_recording } => {
                serde_json::json!({ "baseline_recording": baseline_recording })
            }
            ClientMessage::ProposeJudgment { judgment } | ClientMessage::ReviseJudgment { judgment } => {
                serde_json::json!({ "judgment": judgment })
            }
            _ => Value::Object(Default::default()),
        };
        WireMessage {
            v: PROTOCOL_VERSION,
            kind: self.type_name().into(),
            session_id: session_id.into(),
            seq_no: 0,
            payload,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ProtocolError {
    pub code: &'static str,
    pub message: String,
}

impl ProtocolError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

#[derive(Deserialize)]
struct JudgmentPayload {
    judgment: Judgment,
}

#[derive(Deserialize, Default)]
struct CalibrationPayload {
    #[serde(default)]
    baseline_recording: Option<String>,
}

fn payload<T: DeserializeOwned>(value: Value) -> Result<T, ProtocolError> {
    serde_json::from_value(value).map_err(|e| ProtocolError::new("bad_payload", e.to_string()))
}

/// Parses one text frame from a client.
pub fn parse_client(text: &str) -> Result<ClientMessage, ProtocolError> {
    let wire: WireMessage = serde_json::from_str(text).map_err(|e| ProtocolError::new("malformed", e.to_string()))?;
    if wire.v != PROTOCOL_VERSION {
        return Err(ProtocolError::new("version", format!("unsupported protocol version {}", wire.v)));
    }
    let body = if wire.payload.is_null() { Value::Object(Default::default()) } else { wire.payload };
    Ok(match wire.kind.as_str() {
        "start_calibration" => ClientMessage::StartCalibration,
        "calibration_next" => {
            let p: CalibrationPayload = payload(body)?;
            ClientMessage::CalibrationNext { baseline_recording: p.baseline_recording }
        }
        "done_smelling" => ClientMessage::DoneSmelling,
        "propose_judgment" => ClientMessage::ProposeJudgment { judgment: payload::<JudgmentPayload>(body)?.judgment },
        "revise_judgment" => ClientMessage::ReviseJudgment { judgment: payload::<JudgmentPayload>(body)?.judgment },
        "confirm_judgment" => ClientMessage::ConfirmJudgment,
        "request_dialogue" => ClientMessage::RequestDialogue,
        "acknowledge_reveal" => ClientMessage::AcknowledgeReveal,
        other => return Err(ProtocolError::new("unknown_type", format!("unknown message type {other:?}"))),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePayload {
    pub phase: SessionPhase,
    pub round: Option<u8>,
    pub tentative: Option<Judgment>,
    pub confirmed: Vec<Judgment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenjimonPayload {
    pub rounds: usize,
    pub pattern: String,
    pub segments: Vec<Segment>,
    pub svg: String,
}

impl GenjimonPayload {
    pub fn new(pattern: String, diagram: &PatternDiagram) -> Self {
        Self { rounds: diagram.columns.len(), pattern, segments: diagram.segments.clone(), svg: diagram.to_svg() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPayload {
    pub round: u8,
    /// Windows voted so far.
    pub windows: u32,
    pub probs: [f64; NUM_CLASSES],
    pub votes: [u32; NUM_CLASSES],
    /// The round's voted result, recorded in the session log.
    #[serde(rename = "final")]
    pub is_final: bool,
    /// The sensor stream has delivered its last frame.
    #[serde(default)]
    pub stream_ended: bool,
}

impl PredictionPayload {
    pub fn from_final(p: &AiPrediction) -> Self {
        Self { round: p.round, windows: p.windows, probs: p.probs, votes: p.votes, is_final: true, stream_ended: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
    pub phase: Option<SessionPhase>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after_s: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    Phase(PhasePayload),
    Genjimon(GenjimonPayload),
    PredictionUpdate(PredictionPayload),
    Utterance(Utterance),
    Reveal(RevealReport),
    Error(ErrorPayload),
}

impl ServerMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            ServerMessage::Phase(_) => "phase",
            ServerMessage::Genjimon(_) => "genjimon",
            ServerMessage::PredictionUpdate(_) => "prediction_update",
            ServerMessage::Utterance(_) => "utterance",
            ServerMessage::Reveal(_) => "reveal",
            ServerMessage::Error(_) => "error",
        }
    }

    pub fn to_wire(&self, session_id: &str, seq_no: u64) -> WireMessage {
        let payload = match self {
            ServerMessage::Phase(p) => serde_json::to_value(p),
            ServerMessage::Genjimon(p) => serde_json::to_value(p),
            ServerMessage::PredictionUpdate(p) => serde_json::to_value(p),
            ServerMessage::Utterance(p) => serde_json::to_value(p),
            ServerMessage::Reveal(p) => serde_json::to_value(p),
            ServerMessage::Error(p) => serde_json::to_value(p),
        }
        .expect("payloads serialize");
        WireMessage {
            v: PROTOCOL_VERSION,
            kind: self.type_name().into(),
            session_id: session_id.into(),
            seq_no,
            payload,
        }
    }

    pub fn to_json(&self, session_id: &str, seq_no: u64) -> String {
        serde_json::to_string(&self.to_wire(session_id, seq_no)).expect("wire message serializes")
    }
}
