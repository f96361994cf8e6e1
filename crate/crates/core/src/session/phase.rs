use core::fmt;

use serde::{Deserialize, Serialize};

use crate::ROUNDS;

/// Where a session is in the game flow. Round and sample indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    Briefing,
    Calibration(u8),
    RoundSmelling(u8),
    RoundJudgment(u8),
    RoundDialogue(u8),
    RoundConfirm(u8),
    Reveal,
    Debrief,
    Closed,
}

impl SessionPhase {
    /// The round this phase belongs to, if any.
    pub fn round(self) -> Option<u8> {
        match self {
            SessionPhase::RoundSmelling(r)
            | SessionPhase::RoundJudgment(r)
            | SessionPhase::RoundDialogue(r)
            | SessionPhase::RoundConfirm(r) => Some(r),
            _ => None,
        }
    }

    /// Position along the fixed progression; strictly increases on every
    /// phase change.
    pub fn ordinal(self) -> u32 {
        match self {
            SessionPhase::Briefing => 0,
            SessionPhase::Calibration(i) => i as u32,
            SessionPhase::RoundSmelling(r) => 10 + 4 * r as u32,
            SessionPhase::RoundJudgment(r) => 11 + 4 * r as u32,
            SessionPhase::RoundDialogue(r) => 12 + 4 * r as u32,
            SessionPhase::RoundConfirm(r) => 13 + 4 * r as u32,
            SessionPhase::Reveal => 40,
            SessionPhase::Debrief => 41,
            SessionPhase::Closed => 42,
        }
    }

    /// Every phase in progression order.
    pub fn all() -> alloc::vec::Vec<SessionPhase> {
        let mut out = alloc::vec![SessionPhase::Briefing];
        out.extend((1..=ROUNDS as u8).map(SessionPhase::Calibration));
        for r in 1..=ROUNDS as u8 {
            out.push(SessionPhase::RoundSmelling(r));
            if r >= 2 {
                out.push(SessionPhase::RoundJudgment(r));
            }
            out.push(SessionPhase::RoundDialogue(r));
            out.push(SessionPhase::RoundConfirm(r));
        }
        out.extend([SessionPhase::Reveal, SessionPhase::Debrief, SessionPhase::Closed]);
        out
    }
}

impl fmt::Display for SessionPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionPhase::Briefing => f.write_str("briefing"),
            SessionPhase::Calibration(i) => write!(f, "calibration({i})"),
            SessionPhase::RoundSmelling(r) => write!(f, "round_smelling({r})"),
            SessionPhase::RoundJudgment(r) => write!(f, "round_judgment({r})"),
            SessionPhase::RoundDialogue(r) => write!(f, "round_dialogue({r})"),
            SessionPhase::RoundConfirm(r) => write!(f, "round_confirm({r})"),
            SessionPhase::Reveal => f.write_str("reveal"),
            SessionPhase::Debrief => f.write_str("debrief"),
            SessionPhase::Closed => f.write_str("closed"),
        }
    }
}
