//! Recording → model-ready windows.
//!
//! Stages run in a fixed order: temporal differencing, FFT high-pass over
//! the whole series, standard scaling, windowing. Each stage is optional and
//! the enabled set is recorded in the tensor's provenance.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::sensor::{Channels, Recording};
use crate::NUM_CHANNELS;

/// Lower clamp on scaler standard deviations.
pub const SCALER_EPSILON: f64 = 1e-8;
pub const DEFAULT_CUTOFF_HZ: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("series too short: need {needed} frames, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid window config: window {window_len}, stride {stride} (need 1 <= stride <= window)")]
    InvalidWindow { window_len: usize, stride: usize },
    #[error("scaling enabled but no scaler statistics supplied")]
    MissingScaler,
    #[error("scaler statistics supplied but scaling is disabled")]
    UnexpectedScaler,
    #[error("cannot fit a scaler on an empty training set")]
    EmptyTrainingSet,
    #[error("invalid filter parameters: cutoff {cutoff_hz} Hz at {rate_hz} Hz")]
    InvalidFilter { cutoff_hz: f64, rate_hz: f64 },
}

/// `out[t] = series[t + 1] - series[t]`.
pub fn temporal_difference(series: &[Channels]) -> Result<Vec<Channels>, FeatureError> {
    if series.len() < 2 {
        return Err(FeatureError::TooShort { needed: 2, got: series.len() });
    }
    Ok(series.windows(2).map(|w| core::array::from_fn(|c| w[1][c] - w[0][c])).collect())
}

/// Per channel: removes every DFT bin whose absolute frequency is below
/// `cutoff_hz`, then transforms back. A cutoff of 0 is the identity.
///
/// Only the bins on the smaller side of the cutoff are evaluated, as direct
/// DFT sums, and the result is assembled from them; this is the same linear
/// projection as a full forward/inverse FFT with those bins zeroed.
pub fn highpass_fft(series: &[Channels], cutoff_hz: f64, rate_hz: f64) -> Result<Vec<Channels>, FeatureError> {
    if !cutoff_hz.is_finite() || !rate_hz.is_finite() || cutoff_hz < 0.0 || rate_hz <= 0.0 {
        return Err(FeatureError::InvalidFilter { cutoff_hz, rate_hz });
    }
    let n = series.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    // Non-negative bins k in 0..=n/2 with k * rate / n < cutoff are removed,
    // together with their mirror n - k.
    let removed_half = (0..=n / 2).take_while(|&k| (k as f64) * rate_hz / (n as f64) < cutoff_hz).count();
    if removed_half == 0 {
        return Ok(series.to_vec());
    }
    let removed_total = bins_total(removed_half, n);

    let twiddle = Twiddle::new(n);
    let mut out = series.to_vec();
    if removed_total * 2 <= n {
        let bins: Vec<usize> = (0..removed_half).collect();
        for c in 0..NUM_CHANNELS {
            let low = project(series, c, &bins, &twiddle);
            for (row, l) in out.iter_mut().zip(low) {
                row[c] -= l;
            }
        }
    } else {
        let bins: Vec<usize> = (removed_half..=n / 2).collect();
        for c in 0..NUM_CHANNELS {
            let high = project(series, c, &bins, &twiddle);
            for (row, h) in out.iter_mut().zip(high) {
                row[c] = h;
            }
        }
    }
    Ok(out)
}

/// Number of DFT bins covered by the non-negative bins `0..half` and their mirrors.
fn bins_total(half: usize, n: usize) -> usize {
    (0..half).map(|k| if k == 0 || 2 * k == n { 1 } else { 2 }).sum()
}

struct Twiddle {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Twiddle {
    fn new(n: usize) -> Self {
        let step = 2.0 * core::f64::consts::PI / n as f64;
        Self {
            cos: (0..n).map(|m| libm::cos(step * m as f64)).collect(),
            sin: (0..n).map(|m| libm::sin(step * m as f64)).collect(),
        }
    }
}

/// Real signal component carried by the non-negative bins `bins` (each
/// together with its conjugate mirror).
fn project(series: &[Channels], channel: usize, bins: &[usize], tw: &Twiddle) -> Vec<f64> {
    let n = series.len();
    let mut out = alloc::vec![0.0; n];
    for &k in bins {
        // X_k = sum_t x_t e^{-2 pi i k t / n}
        let (mut re, mut im) = (0.0, 0.0);
        let mut idx = 0usize;
        for row in series {
            re += row[channel] * tw.cos[idx];
            im -= row[channel] * tw.sin[idx];
            idx = (idx + k) % n;
        }
        let weight = if k == 0 || 2 * k == n { 1.0 } else { 2.0 } / n as f64;
        let mut idx = 0usize;
        for o in out.iter_mut() {
            // Re(X_k e^{+2 pi i k t / n})
            *o += weight * (re * tw.cos[idx] - im * tw.sin[idx]);
            idx = (idx + k) % n;
        }
    }
    out
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Channels,
    pub std: Channels,
}

/// Fits over every row of every training series.
pub fn fit_scaler<'a>(series: impl IntoIterator<Item = &'a [Channels]> + Clone) -> Result<ScalerStats, FeatureError> {
    let mut count = 0usize;
    let mut sum = [0.0; NUM_CHANNELS];
    for s in series.clone() {
        for row in s {
            count += 1;
            for c in 0..NUM_CHANNELS {
                sum[c] += row[c];
            }
        }
    }
    if count == 0 {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let mean: Channels = core::array::from_fn(|c| sum[c] / count as f64);
    let mut sq = [0.0; NUM_CHANNELS];
    for s in series {
        for row in s {
            for c in 0..NUM_CHANNELS {
                let d = row[c] - mean[c];
                sq[c] += d * d;
            }
        }
    }
    let std = core::array::from_fn(|c| libm::sqrt(sq[c] / count as f64).max(SCALER_EPSILON));
    Ok(ScalerStats { mean, std })
}

pub fn apply_scaler(stats: &ScalerStats, series: &[Channels]) -> Vec<Channels> {
    series.iter().map(|row| core::array::from_fn(|c| (row[c] - stats.mean[c]) / stats.std[c])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_len: usize,
    pub stride: usize,
}

impl WindowConfig {
    pub fn new(window_len: usize, stride: usize) -> Result<Self, FeatureError> {
        if stride == 0 || stride > window_len {
            return Err(FeatureError::InvalidWindow { window_len, stride });
        }
        Ok(Self { window_len, stride })
    }

    /// `floor((t - W) / S) + 1`, or 0 when the series is shorter than a window.
    pub fn window_count(&self, t: usize) -> usize {
        if t < self.window_len {
            0
        } else {
            (t - self.window_len) / self.stride + 1
        }
    }
}

/// The five window/stride presets, 5 to 30 seconds at 10 Hz.
pub const WINDOW_PRESETS: [WindowConfig; 5] = [
    WindowConfig { window_len: 50, stride: 25 },
    WindowConfig { window_len: 100, stride: 50 },
    WindowConfig { window_len: 150, stride: 75 },
    WindowConfig { window_len: 200, stride: 100 },
    WindowConfig { window_len: 300, stride: 150 },
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessFlags {
    pub diff: bool,
    /// High-pass cutoff in Hz when enabled.
    pub highpass_hz: Option<f64>,
    pub scale: bool,
}

impl PreprocessFlags {
    pub const RAW: Self = Self { diff: false, highpass_hz: None, scale: false };

    pub fn all() -> Self {
        Self { diff: true, highpass_hz: Some(DEFAULT_CUTOFF_HZ), scale: true }
    }
}

impl Default for PreprocessFlags {
    /// Scaling only: differencing and drift removal both erase the plateau
    /// level that separates the synthetic classes.
    fn default() -> Self {
        Self { diff: false, highpass_hz: None, scale: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub recording_id: String,
    pub config: WindowConfig,
    pub flags: PreprocessFlags,
    /// The high-pass ran over the full series before windowing.
    pub highpass_per_recording: bool,
}

/// `windows x W x 9`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTensor {
    pub data: Vec<f64>,
    pub n_windows: usize,
    pub window_len: usize,
    pub provenance: Provenance,
}

impl FeatureTensor {
    /// Window `k` as a flat `W x 9` slice.
    pub fn window(&self, k: usize) -> &[f64] {
        let size = self.window_len * NUM_CHANNELS;
        &self.data[k * size..(k + 1) * size]
    }

    pub fn windows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_windows).map(move |k| self.window(k))
    }
}

/// Window `k` covers frames `[k * S, k * S + W)`.
pub fn make_windows(series: &[Channels], cfg: WindowConfig, recording_id: &str) -> Result<FeatureTensor, FeatureError> {
    WindowConfig::new(cfg.window_len, cfg.stride)?;
    if series.len() < cfg.window_len {
        return Err(FeatureError::TooShort { needed: cfg.window_len, got: series.len() });
    }
    let n_windows = cfg.window_count(series.len());
    let mut data = Vec::with_capacity(n_windows * cfg.window_len * NUM_CHANNELS);
    for k in 0..n_windows {
        let start = k * cfg.stride;
        for row in &series[start..start + cfg.window_len] {
            data.extend_from_slice(row);
        }
    }
    Ok(FeatureTensor {
        data,
        n_windows,
        window_len: cfg.window_len,
        provenance: Provenance {
            recording_id: recording_id.into(),
            config: cfg,
            flags: PreprocessFlags::RAW,
            highpass_per_recording: false,
        },
    })
}

/// Differencing and high-pass, the stages that run before the scaler.
pub fn filter_series(
    series: &[Channels],
    flags: &PreprocessFlags,
    rate_hz: f64,
) -> Result<Vec<Channels>, FeatureError> {
    let mut out = if flags.diff { temporal_difference(series)? } else { series.to_vec() };
    if let Some(cutoff) = flags.highpass_hz {
        out = highpass_fft(&out, cutoff, rate_hz)?;
    }
    Ok(out)
}

/// Every enabled stage except windowing.
pub fn preprocess_series(
    series: &[Channels],
    flags: &PreprocessFlags,
    stats: Option<&ScalerStats>,
    rate_hz: f64,
) -> Result<Vec<Channels>, FeatureError> {
    match (flags.scale, stats) {
        (true, None) => return Err(FeatureError::MissingScaler),
        (false, Some(_)) => return Err(FeatureError::UnexpectedScaler),
        _ => {}
    }
    let filtered = filter_series(series, flags, rate_hz)?;
    Ok(match stats {
        Some(stats) => apply_scaler(stats, &filtered),
        None => filtered,
    })
}

/// Raw frames needed to produce one window: one extra when differencing.
pub fn raw_frames_per_window(cfg: WindowConfig, flags: &PreprocessFlags) -> usize {
    cfg.window_len + usize::from(flags.diff)
}

/// Preprocesses the raw frames of a single window and flattens them. Any
/// high-pass runs over this window only.
pub fn preprocess_window(
    raw: &[Channels],
    flags: &PreprocessFlags,
    stats: Option<&ScalerStats>,
    rate_hz: f64,
) -> Result<Vec<f64>, FeatureError> {
    let rows = preprocess_series(raw, flags, stats, rate_hz)?;
    Ok(rows.iter().flatten().copied().collect())
}

/// Full pipeline: diff → high-pass → scale → window.
pub fn preprocess(
    recording: &Recording,
    cfg: WindowConfig,
    stats: Option<&ScalerStats>,
    flags: &PreprocessFlags,
) -> Result<FeatureTensor, FeatureError> {
    let processed = preprocess_series(&recording.series(), flags, stats, recording.meta.sample_rate_hz)?;
    let mut tensor = make_windows(&processed, cfg, &recording.meta.recording_id)?;
    tensor.provenance.flags = *flags;
    tensor.provenance.highpass_per_recording = flags.highpass_hz.is_some();
    Ok(tensor)
}
