//! How the partner's own judgment relates to the player's.

use serde::{Deserialize, Serialize};

use super::DialogueError;
use crate::partition::{apply_judgment, Judgment, Partition};
use crate::session::AiPrediction;

/// The partner's judgment for `round`: a match with the earliest prior round
/// whose voted class equals this round's, otherwise new. `classes[i]` is the
/// voted class of round `i + 1`.
pub fn ai_match_from_classes(classes: &[usize], round: u8) -> Result<Judgment, DialogueError> {
    let r = round as usize;
    if r == 0 || classes.len() < r {
        return Err(DialogueError::MissingPrediction(classes.len() as u8 + 1));
    }
    let current = classes[r - 1];
    Ok(match classes[..r - 1].iter().position(|&c| c == current) {
        Some(j) => Judgment::MatchRound(j as u8 + 1),
        None => Judgment::New,
    })
}

/// [`ai_match_from_classes`] over recorded predictions. With `min_margin`,
/// a round whose top two probabilities are closer than the margin is
/// judged new.
pub fn ai_match_judgment(
    predictions: &[Option<AiPrediction>],
    round: u8,
    min_margin: Option<f64>,
) -> Result<Judgment, DialogueError> {
    let mut classes = alloc::vec::Vec::with_capacity(round as usize);
    for r in 1..=round {
        let p = predictions.get(r as usize - 1).and_then(Option::as_ref).ok_or(DialogueError::MissingPrediction(r))?;
        classes.push(p.class());
    }
    if let Some(margin) = min_margin {
        let p = predictions[round as usize - 1].as_ref().expect("checked above");
        let mut sorted = p.probs;
        sorted.sort_by(|a, b| b.total_cmp(a));
        if sorted[0] - sorted[1] < margin {
            return Ok(Judgment::New);
        }
    }
    ai_match_from_classes(&classes, round)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentKind {
    Aligned,
    Divergent,
    PartiallyAligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub kind: AlignmentKind,
    /// Group label the player put the round in.
    pub human_group: u8,
    /// Group label the partner put the round in.
    pub ai_group: u8,
}

/// Aligned when both judgments extend `prefix` to the same partition;
/// partially aligned when both match but into different groups; divergent
/// when one says new and the other match.
pub fn compute_alignment(human: Judgment, ai: Judgment, prefix: &Partition) -> Result<Alignment, DialogueError> {
    let h = apply_judgment(prefix, human)?;
    let a = apply_judgment(prefix, ai)?;
    let human_group = *h.rgs().last().expect("non-empty");
    let ai_group = *a.rgs().last().expect("non-empty");
    let kind = if h == a {
        AlignmentKind::Aligned
    } else if matches!((human, ai), (Judgment::MatchRound(_), Judgment::MatchRound(_))) {
        AlignmentKind::PartiallyAligned
    } else {
        AlignmentKind::Divergent
    };
    Ok(Alignment { kind, human_group, ai_group })
}
