//! Paced playback of a recording as a live frame source.

use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use genji_core::sensor::{Recording, SensorFrame};
use serde::{Deserialize, Serialize};

/// Playback rate relative to real time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speedup {
    Factor(f64),
    /// Deliver every frame immediately.
    Unlimited,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("speedup must be a positive number or `inf`, got {0:?}")]
pub struct SpeedupError(pub String);

impl Speedup {
    pub fn new(factor: f64) -> Result<Self, SpeedupError> {
        if factor.is_infinite() && factor > 0.0 {
            Ok(Speedup::Unlimited)
        } else if factor > 0.0 && factor.is_finite() {
            Ok(Speedup::Factor(factor))
        } else {
            Err(SpeedupError(factor.to_string()))
        }
    }
}

impl FromStr for Speedup {
    type Err = SpeedupError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "infinity" | "max" | "∞" => Ok(Speedup::Unlimited),
            other => other.parse::<f64>().map_err(|_| SpeedupError(other.into())).and_then(Speedup::new),
        }
    }
}

/// Single-consumer cursor over a recording's frames. Frame `i` becomes due
/// `(t_i - t_0) / speedup` after the first read.
#[derive(Debug, Clone)]
pub struct FrameStream {
    frames: Arc<[SensorFrame]>,
    cursor: usize,
    speedup: Speedup,
    start: Option<Instant>,
}

pub fn open_stream(recording: &Recording, speedup: Speedup) -> FrameStream {
    FrameStream { frames: recording.frames().into(), cursor: 0, speedup, start: None }
}

impl FrameStream {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.frames.len() - self.cursor
    }

    fn offset(&self, index: usize) -> Duration {
        match self.speedup {
            Speedup::Unlimited => Duration::ZERO,
            Speedup::Factor(f) => {
                let ms = (self.frames[index].t_ms - self.frames[0].t_ms) as f64 / f;
                Duration::from_secs_f64(ms / 1000.0)
            }
        }
    }

    /// Next frame and the instant it is due, or `None` at end of stream.
    fn advance(&mut self) -> Option<(SensorFrame, Instant)> {
        let frame = *self.frames.get(self.cursor)?;
        let start = *self.start.get_or_insert_with(Instant::now);
        let due = start + self.offset(self.cursor);
        self.cursor += 1;
        Some((frame, due))
    }

    /// Blocks until the next frame is due.
    pub fn next_blocking(&mut self) -> Option<SensorFrame> {
        let (frame, due) = self.advance()?;
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        Some(frame)
    }

    /// Waits asynchronously until the next frame is due.
    pub async fn next(&mut self) -> Option<SensorFrame> {
        let (frame, due) = self.advance()?;
        if self.speedup != Speedup::Unlimited {
            tokio::time::sleep_until(due.into()).await;
        }
        Some(frame)
    }
}

impl Iterator for FrameStream {
    type Item = SensorFrame;
    fn next(&mut self) -> Option<SensorFrame> {
        self.next_blocking()
    }
}
