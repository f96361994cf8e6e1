//! Window-level and voted recording-level metrics.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Prediction, VoteMode, VoteState, WindowClassifier};
use crate::sensor::Recording;
use crate::NUM_CLASSES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub window_accuracy: f64,
    /// `confusion[true][predicted]` window counts.
    pub confusion: [[u32; NUM_CLASSES]; NUM_CLASSES],
    pub recording_accuracy: f64,
    pub n_windows: usize,
    pub n_recordings: usize,
    pub recordings_correct: usize,
}

/// Scores per-recording window predictions against their labels.
pub fn evaluate_predictions(
    recordings: &[(usize, Vec<Prediction>)],
    mode: VoteMode,
) -> Result<Metrics, ClassifierError> {
    if recordings.is_empty() {
        return Err(ClassifierError::EmptySplit);
    }
    let mut confusion = [[0u32; NUM_CLASSES]; NUM_CLASSES];
    let mut correct = 0usize;
    let mut n_windows = 0usize;
    let mut recordings_correct = 0usize;
    for (label, preds) in recordings {
        if *label >= NUM_CLASSES {
            return Err(ClassifierError::BadLabel(*label));
        }
        let mut vote = VoteState::new();
        for p in preds {
            confusion[*label][p.class] += 1;
            correct += usize::from(p.class == *label);
            vote.accumulate(p);
        }
        n_windows += preds.len();
        if vote.result(mode).ok() == Some(*label) {
            recordings_correct += 1;
        }
    }
    Ok(Metrics {
        window_accuracy: correct as f64 / n_windows.max(1) as f64,
        confusion,
        recording_accuracy: recordings_correct as f64 / recordings.len() as f64,
        n_windows,
        n_recordings: recordings.len(),
        recordings_correct,
    })
}

/// Runs `classifier` over labelled recordings.
pub fn evaluate<C: WindowClassifier + ?Sized>(
    classifier: &C,
    recordings: &[Recording],
    mode: VoteMode,
) -> Result<Metrics, ClassifierError> {
    let mut scored = Vec::with_capacity(recordings.len());
    for r in recordings {
        let label = r.meta.class_label.ok_or_else(|| ClassifierError::MissingLabel(r.meta.recording_id.clone()))?;
        scored.push((label as usize, classifier.predict_recording(r)?));
    }
    evaluate_predictions(&scored, mode)
}
