//! Rolling-window inference over a live frame feed.

use std::collections::VecDeque;
use std::sync::Arc;

use genji_core::classifier::{ClassifierError, Prediction, VoteMode, VoteState, WindowClassifier};
use genji_core::features::{preprocess_window, raw_frames_per_window};
use genji_core::sensor::{Channels, Environment, Recording, RecordingMeta, SensorFrame, TimeOfDay};
use genji_core::session::AiPrediction;
use serde::{Deserialize, Serialize};

pub type SharedClassifier = Arc<dyn WindowClassifier + Send + Sync>;

/// One window's result with the running vote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowUpdate {
    pub round: u8,
    /// 0-based window index.
    pub window: u32,
    pub prediction: Prediction,
    pub votes: [u32; genji_core::NUM_CLASSES],
    pub total: u32,
}

/// Emits a prediction whenever a full window has arrived, at the model's
/// stride, matching offline windowing of the same frames.
pub struct StreamingPredictor {
    classifier: SharedClassifier,
    round: u8,
    buffer: VecDeque<Channels>,
    frames: Vec<SensorFrame>,
    need: usize,
    stride: usize,
    rate_hz: f64,
    vote: VoteState,
}

impl StreamingPredictor {
    pub fn new(classifier: SharedClassifier, round: u8, rate_hz: f64) -> Self {
        let cfg = classifier.window_config();
        let need = raw_frames_per_window(cfg, &classifier.flags());
        Self {
            classifier,
            round,
            buffer: VecDeque::with_capacity(need),
            frames: Vec::new(),
            need,
            stride: cfg.stride,
            rate_hz,
            vote: VoteState::new(),
        }
    }

    pub fn round(&self) -> u8 {
        self.round
    }

    pub fn vote(&self) -> &VoteState {
        &self.vote
    }

    pub fn frames_seen(&self) -> usize {
        self.frames.len()
    }

    pub fn push(&mut self, frame: SensorFrame) -> Result<Option<WindowUpdate>, ClassifierError> {
        self.frames.push(frame);
        if self.buffer.len() == self.need {
            self.buffer.pop_front();
        }
        self.buffer.push_back(frame.channels);
        let n = self.frames.len();
        if n < self.need || !(n - self.need).is_multiple_of(self.stride) {
            return Ok(None);
        }
        let raw: Vec<Channels> = self.buffer.iter().copied().collect();
        let window = preprocess_window(&raw, &self.classifier.flags(), self.classifier.scaler(), self.rate_hz)?;
        let prediction = self.classifier.predict_window(&window)?;
        self.vote.accumulate(&prediction);
        Ok(Some(WindowUpdate {
            round: self.round,
            window: self.vote.total - 1,
            prediction,
            votes: self.vote.counts,
            total: self.vote.total,
        }))
    }

    /// Least-squares slope of every channel over the frames seen so far.
    pub fn trend_slopes(&self) -> Option<Channels> {
        let meta = RecordingMeta::new("stream", Environment::Indoor, TimeOfDay::Evening);
        let rec = Recording::new(self.frames.clone(), meta).ok()?;
        (self.frames.len() >= 2).then(|| rec.trend_slopes())
    }

    /// Round-level prediction; uniform and flagged low-confidence when no
    /// full window arrived.
    pub fn finish(&self, mode: VoteMode) -> AiPrediction {
        if self.vote.total == 0 {
            AiPrediction::uniform(self.round)
        } else {
            self.vote.to_ai_prediction(self.round, mode)
        }
    }
}
