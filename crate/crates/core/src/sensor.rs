//! Nine-channel gas-sensor recordings.
//!
//! Frames are sampled nominally at 10 Hz. Channel order is fixed:
//! temperature (°C), humidity (%RH), pressure (hPa), TVOC (ppb), eCO2 (ppm),
//! then the raw VOC, NO2, ethanol and CO readings in sensor counts.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{NUM_CHANNELS, NUM_CLASSES};

pub const CHANNEL_NAMES: [&str; NUM_CHANNELS] =
    ["temp_c", "humidity_pct", "pressure_hpa", "tvoc_ppb", "eco2_ppm", "voc_raw", "no2_raw", "ethanol_raw", "co_raw"];

pub const NOMINAL_RATE_HZ: f64 = 10.0;
pub const NOMINAL_GAP_MS: u64 = 100;
/// Gaps wider than this are filled by [`gap_fill`].
pub const GAP_FILL_THRESHOLD_MS: u64 = 150;

pub type Channels = [f64; NUM_CHANNELS];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SensorError {
    #[error("frame {index}: non-finite channel value")]
    NonFinite { index: usize },
    #[error("frame {index}: timestamp {t_ms} does not increase")]
    NonIncreasing { index: usize, t_ms: u64 },
    #[error("at least {needed} frames required, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("class label {0} out of range")]
    BadClass(u8),
    #[error("duration must be at least 10 s, got {0}")]
    TooShort(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub t_ms: u64,
    pub channels: Channels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Indoor,
    Outdoor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeOfDay {
    Morning,
    Evening,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub recording_id: String,
    #[serde(default)]
    pub class_label: Option<u8>,
    pub environment: Environment,
    pub time_of_day: TimeOfDay,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub resampled: bool,
}

fn default_rate() -> f64 {
    NOMINAL_RATE_HZ
}

impl RecordingMeta {
    pub fn new(recording_id: impl Into<String>, environment: Environment, time_of_day: TimeOfDay) -> Self {
        Self {
            recording_id: recording_id.into(),
            class_label: None,
            environment,
            time_of_day,
            sample_rate_hz: NOMINAL_RATE_HZ,
            notes: String::new(),
            resampled: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    frames: Vec<SensorFrame>,
    pub meta: RecordingMeta,
}

impl Recording {
    /// Checks finiteness and strictly increasing timestamps.
    pub fn new(frames: Vec<SensorFrame>, meta: RecordingMeta) -> Result<Self, SensorError> {
        for (index, frame) in frames.iter().enumerate() {
            if frame.channels.iter().any(|v| !v.is_finite()) {
                return Err(SensorError::NonFinite { index });
            }
            if index > 0 && frame.t_ms <= frames[index - 1].t_ms {
                return Err(SensorError::NonIncreasing { index, t_ms: frame.t_ms });
            }
        }
        if let Some(c) = meta.class_label.filter(|&c| c as usize >= NUM_CLASSES) {
            return Err(SensorError::BadClass(c));
        }
        Ok(Self { frames, meta })
    }

    pub fn frames(&self) -> &[SensorFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Channel values as a `T x 9` series.
    pub fn series(&self) -> Vec<Channels> {
        self.frames.iter().map(|f| f.channels).collect()
    }

    /// Least-squares slope per channel, in units per second.
    pub fn trend_slopes(&self) -> Channels {
        let n = self.frames.len();
        let mut slopes = [0.0; NUM_CHANNELS];
        if n < 2 {
            return slopes;
        }
        let ts: Vec<f64> = self.frames.iter().map(|f| f.t_ms as f64 / 1000.0).collect();
        let t_mean = ts.iter().sum::<f64>() / n as f64;
        let sxx: f64 = ts.iter().map(|t| (t - t_mean) * (t - t_mean)).sum();
        for (c, slope) in slopes.iter_mut().enumerate() {
            let y_mean = self.frames.iter().map(|f| f.channels[c]).sum::<f64>() / n as f64;
            let sxy: f64 = self.frames.iter().zip(&ts).map(|(f, t)| (t - t_mean) * (f.channels[c] - y_mean)).sum();
            *slope = sxy / sxx;
        }
        slopes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub median_gap_ms: f64,
    pub max_gap_ms: u64,
    pub out_of_spec: bool,
}

/// Flags a median gap more than 20% away from 100 ms or any gap over 500 ms.
pub fn validate_rate(recording: &Recording) -> Result<RateReport, SensorError> {
    let frames = recording.frames();
    if frames.len() < 2 {
        return Err(SensorError::TooFewFrames { needed: 2, got: frames.len() });
    }
    let mut gaps: Vec<u64> = frames.windows(2).map(|w| w[1].t_ms - w[0].t_ms).collect();
    gaps.sort_unstable();
    let mid = gaps.len() / 2;
    let median_gap_ms = if gaps.len() % 2 == 1 { gaps[mid] as f64 } else { (gaps[mid - 1] + gaps[mid]) as f64 / 2.0 };
    let max_gap_ms = *gaps.last().unwrap();
    let nominal = NOMINAL_GAP_MS as f64;
    let out_of_spec = (median_gap_ms - nominal).abs() > 0.2 * nominal || max_gap_ms > 500;
    Ok(RateReport { median_gap_ms, max_gap_ms, out_of_spec })
}

/// Fills gaps wider than 150 ms by linear interpolation at 100 ms steps from
/// the frame before the gap. Marks the meta as resampled when anything was
/// inserted.
pub fn gap_fill(recording: &Recording) -> Recording {
    let frames = recording.frames();
    let mut out = Vec::with_capacity(frames.len());
    let mut inserted = false;
    for (i, frame) in frames.iter().enumerate() {
        if i > 0 {
            let prev = frames[i - 1];
            if frame.t_ms - prev.t_ms > GAP_FILL_THRESHOLD_MS {
                let span = (frame.t_ms - prev.t_ms) as f64;
                let mut t = prev.t_ms + NOMINAL_GAP_MS;
                while t < frame.t_ms {
                    let a = (t - prev.t_ms) as f64 / span;
                    let channels =
                        core::array::from_fn(|c| prev.channels[c] + a * (frame.channels[c] - prev.channels[c]));
                    out.push(SensorFrame { t_ms: t, channels });
                    inserted = true;
                    t += NOMINAL_GAP_MS;
                }
            }
        }
        out.push(*frame);
    }
    let mut meta = recording.meta.clone();
    meta.resampled |= inserted;
    Recording { frames: out, meta }
}

// --- synthetic scents -------------------------------------------------------

/// Per-environment channel baselines.
pub const BASELINE_INDOOR: Channels = [22.0, 45.0, 1013.0, 50.0, 420.0, 100.0, 80.0, 120.0, 90.0];
/// Outdoor shifts temperature and humidity; morning is one degree cooler.
pub const OUTDOOR_OFFSET: Channels = [-4.0, 10.0, -2.0, 10.0, -10.0, 0.0, 0.0, 0.0, 0.0];
pub const MORNING_OFFSET: Channels = [-1.0, 3.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];

/// Plateau rise above baseline for each incense class. The same table is
/// shipped as `data/synthetic_signatures.csv`.
pub const CLASS_PLATEAUS: [Channels; NUM_CLASSES] = [
    [0.5, 2.0, 0.0, 400.0, 150.0, 60.0, 10.0, 90.0, 20.0],
    [0.2, 4.0, 0.1, 150.0, 400.0, 20.0, 45.0, 30.0, 70.0],
    [0.8, 1.0, 0.0, 250.0, 80.0, 110.0, 25.0, 15.0, 40.0],
    [0.3, 3.0, 0.2, 600.0, 250.0, 35.0, 70.0, 60.0, 10.0],
    [0.6, 6.0, 0.1, 80.0, 60.0, 85.0, 5.0, 140.0, 55.0],
];

pub const RISE_MIDPOINT_S: f64 = 2.5;
pub const RISE_TIME_CONSTANT_S: f64 = 0.75;
pub const DRIFT_AMPLITUDE: f64 = 1.0;
pub const DRIFT_FREQUENCY_HZ: f64 = 0.003;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub class_label: u8,
    pub seed: u64,
    pub duration_s: u32,
    pub environment: Environment,
    pub time_of_day: TimeOfDay,
    pub noise_sigma: f64,
}

impl SynthParams {
    pub fn new(class_label: u8, seed: u64, duration_s: u32) -> Self {
        Self {
            class_label,
            seed,
            duration_s,
            environment: Environment::Indoor,
            time_of_day: TimeOfDay::Evening,
            noise_sigma: DEFAULT_NOISE_SIGMA,
        }
    }
}

/// Noise-free signal: baseline + logistic rise to the class plateau + slow
/// sinusoidal drift.
pub fn signature(class_label: u8, environment: Environment, time_of_day: TimeOfDay, t_s: f64) -> Channels {
    let rise = 1.0 / (1.0 + libm::exp(-(t_s - RISE_MIDPOINT_S) / RISE_TIME_CONSTANT_S));
    let plateau = &CLASS_PLATEAUS[class_label as usize];
    core::array::from_fn(|c| {
        let mut base = BASELINE_INDOOR[c];
        if environment == Environment::Outdoor {
            base += OUTDOOR_OFFSET[c];
        }
        if time_of_day == TimeOfDay::Morning {
            base += MORNING_OFFSET[c];
        }
        let phase = 0.7 * c as f64;
        let drift = DRIFT_AMPLITUDE * libm::sin(2.0 * core::f64::consts::PI * DRIFT_FREQUENCY_HZ * t_s + phase);
        base + plateau[c] * rise + drift
    })
}

/// Deterministic synthetic recording on the 100 ms grid.
pub fn synth_recording(params: &SynthParams) -> Result<Recording, SensorError> {
    if params.class_label as usize >= NUM_CLASSES {
        return Err(SensorError::BadClass(params.class_label));
    }
    if params.duration_s < 10 {
        return Err(SensorError::TooShort(params.duration_s));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.duration_s as u64 * 1000 / NOMINAL_GAP_MS;
    let frames = (0..n)
        .map(|i| {
            let t_ms = i * NOMINAL_GAP_MS;
            let mut channels =
                signature(params.class_label, params.environment, params.time_of_day, t_ms as f64 / 1000.0);
            if params.noise_sigma > 0.0 {
                for v in channels.iter_mut() {
                    *v += params.noise_sigma * standard_normal(&mut rng);
                }
            }
            SensorFrame { t_ms, channels }
        })
        .collect();
    let mut meta = RecordingMeta::new(
        alloc::format!("synth-c{}-s{}", params.class_label, params.seed),
        params.environment,
        params.time_of_day,
    );
    meta.class_label = Some(params.class_label);
    meta.notes = alloc::format!("synthetic, sigma={}", params.noise_sigma);
    Ok(Recording { frames, meta })
}

/// Box-Muller transform.
pub(crate) fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}
