//! Five-class incense classifier over windowed sensor data.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::features::{FeatureError, FeatureTensor, PreprocessFlags, ScalerStats, WindowConfig};
use crate::sensor::Recording;
use crate::session::AiPrediction;
use crate::NUM_CLASSES;

mod centroid;
mod eval;
mod gradcheck;
mod linalg;
mod train;
mod transformer;
mod vote;

pub use centroid::{fit_centroids, CentroidModel};
pub use eval::{evaluate, evaluate_predictions, Metrics};
pub use gradcheck::{gradient_check, GradCheckReport, GradScope};
pub use train::{prepare_split, train, train_centroids, train_on_windows, TrainConfig, TrainReport, TrainingSet};
pub use transformer::{
    cross_entropy, positional_encoding, Layout, Model, ModelConfig, Positional, TensorGroup, TensorKind, TensorSpec,
    LAYER_NORM_EPS, MODEL_VERSION,
};
pub use vote::{VoteMode, VoteState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("label {0} out of range")]
    BadLabel(usize),
    #[error("recording {0} has no class label")]
    MissingLabel(String),
    #[error("class {0} has no training recordings")]
    ClassAbsent(usize),
    #[error("no votes accumulated")]
    EmptyVote,
    #[error("empty split")]
    EmptySplit,
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Class distribution for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probs: [f64; NUM_CLASSES],
    pub class: usize,
}

impl Prediction {
    pub fn from_logits(logits: &[f64; NUM_CLASSES]) -> Self {
        Self::from_probs(softmax(logits))
    }

    pub fn from_probs(probs: [f64; NUM_CLASSES]) -> Self {
        Self { probs, class: argmax(&probs) }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: [f64; NUM_CLASSES] = core::array::from_fn(|i| libm::exp(logits[i] - max));
    let sum: f64 = exps.iter().sum();
    core::array::from_fn(|i| exps[i] / sum)
}

/// A per-window classifier together with the preprocessing it expects.
pub trait WindowClassifier {
    fn window_config(&self) -> WindowConfig;
    fn flags(&self) -> PreprocessFlags;
    fn scaler(&self) -> Option<&ScalerStats>;
    fn predict_window(&self, window: &[f64]) -> Result<Prediction, ClassifierError>;

    fn featurize(&self, recording: &Recording) -> Result<FeatureTensor, ClassifierError> {
        Ok(crate::features::preprocess(recording, self.window_config(), self.scaler(), &self.flags())?)
    }

    /// Per-window predictions for a whole recording.
    fn predict_recording(&self, recording: &Recording) -> Result<Vec<Prediction>, ClassifierError> {
        let tensor = self.featurize(recording)?;
        tensor.windows().map(|w| self.predict_window(w)).collect()
    }

    /// Votes every window of the recording into a round-level prediction.
    fn vote_recording(
        &self,
        recording: &Recording,
        round: u8,
        mode: VoteMode,
    ) -> Result<AiPrediction, ClassifierError> {
        let mut state = VoteState::new();
        for p in self.predict_recording(recording)? {
            state.accumulate(&p);
        }
        Ok(state.to_ai_prediction(round, mode))
    }
}

impl WindowClassifier for Model {
    fn window_config(&self) -> WindowConfig {
        self.window
    }

    fn flags(&self) -> PreprocessFlags {
        self.flags
    }

    fn scaler(&self) -> Option<&ScalerStats> {
        self.scaler.as_ref()
    }

    fn predict_window(&self, window: &[f64]) -> Result<Prediction, ClassifierError> {
        Model::predict_window(self, window)
    }
}
