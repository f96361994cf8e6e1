//! Accumulative voting over window predictions.

use serde::{Deserialize, Serialize};

use super::{argmax, ClassifierError, Prediction};
use crate::session::AiPrediction;
use crate::NUM_CLASSES;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteMode {
    /// One unweighted vote per window for its argmax class.
    #[default]
    Count,
    /// Sum of window probabilities.
    ProbabilitySum,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VoteState {
    pub counts: [u32; NUM_CLASSES],
    pub total: u32,
    pub prob_sum: [f64; NUM_CLASSES],
}

impl VoteState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn accumulate(&mut self, prediction: &Prediction) {
        self.counts[prediction.class] += 1;
        self.total += 1;
        for (s, p) in self.prob_sum.iter_mut().zip(&prediction.probs) {
            *s += p;
        }
    }

    /// Winning class; ties go to the lowest index.
    pub fn result(&self, mode: VoteMode) -> Result<usize, ClassifierError> {
        if self.total == 0 {
            return Err(ClassifierError::EmptyVote);
        }
        Ok(match mode {
            VoteMode::Count => {
                let mut best = 0;
                for c in 1..NUM_CLASSES {
                    if self.counts[c] > self.counts[best] {
                        best = c;
                    }
                }
                best
            }
            VoteMode::ProbabilitySum => argmax(&self.prob_sum),
        })
    }

    /// Normalised distribution: vote shares, or mean probabilities in
    /// [`VoteMode::ProbabilitySum`]. Uniform when empty.
    pub fn distribution(&self, mode: VoteMode) -> [f64; NUM_CLASSES] {
        if self.total == 0 {
            return [1.0 / NUM_CLASSES as f64; NUM_CLASSES];
        }
        let n = self.total as f64;
        match mode {
            VoteMode::Count => core::array::from_fn(|c| self.counts[c] as f64 / n),
            VoteMode::ProbabilitySum => core::array::from_fn(|c| self.prob_sum[c] / n),
        }
    }

    pub fn to_ai_prediction(&self, round: u8, mode: VoteMode) -> AiPrediction {
        let probs = self.distribution(mode);
        AiPrediction { round, probs, votes: self.counts, windows: self.total, low_confidence: self.total == 0 }
    }
}
