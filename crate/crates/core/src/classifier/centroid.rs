//! Nearest-centroid baseline over time-averaged windows.

use serde::{Deserialize, Serialize};

use super::{softmax, ClassifierError, Prediction, WindowClassifier};
use crate::features::{FeatureTensor, PreprocessFlags, ScalerStats, WindowConfig};
use crate::sensor::Channels;
use crate::{NUM_CHANNELS, NUM_CLASSES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub centroids: [Channels; NUM_CLASSES],
    pub window: WindowConfig,
    pub flags: PreprocessFlags,
    pub scaler: Option<ScalerStats>,
}

/// Mean over time of one `W x 9` window.
pub fn window_mean(window: &[f64]) -> Channels {
    let rows = window.len() / NUM_CHANNELS;
    let mut mean = [0.0; NUM_CHANNELS];
    for row in window.chunks_exact(NUM_CHANNELS) {
        for c in 0..NUM_CHANNELS {
            mean[c] += row[c];
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows.max(1) as f64);
    mean
}

/// Fits one centroid per class from labelled tensors.
pub fn fit_centroids(
    tensors: &[(FeatureTensor, usize)],
    window: WindowConfig,
    flags: PreprocessFlags,
    scaler: Option<ScalerStats>,
) -> Result<CentroidModel, ClassifierError> {
    let mut sums = [[0.0; NUM_CHANNELS]; NUM_CLASSES];
    let mut counts = [0usize; NUM_CLASSES];
    for (tensor, label) in tensors {
        if *label >= NUM_CLASSES {
            return Err(ClassifierError::BadLabel(*label));
        }
        for w in tensor.windows() {
            let m = window_mean(w);
            for c in 0..NUM_CHANNELS {
                sums[*label][c] += m[c];
            }
            counts[*label] += 1;
        }
    }
    if let Some(absent) = counts.iter().position(|&n| n == 0) {
        return Err(ClassifierError::ClassAbsent(absent));
    }
    let centroids = core::array::from_fn(|k| core::array::from_fn(|c| sums[k][c] / counts[k] as f64));
    Ok(CentroidModel { centroids, window, flags, scaler })
}

impl CentroidModel {
    pub fn distances(&self, window: &[f64]) -> [f64; NUM_CLASSES] {
        let m = window_mean(window);
        core::array::from_fn(|k| {
            let sq: f64 = self.centroids[k].iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum();
            libm::sqrt(sq)
        })
    }
}

impl WindowClassifier for CentroidModel {
    fn window_config(&self) -> WindowConfig {
        self.window
    }

    fn flags(&self) -> PreprocessFlags {
        self.flags
    }

    fn scaler(&self) -> Option<&ScalerStats> {
        self.scaler.as_ref()
    }

    /// `softmax(-distance)`; the nearest centroid wins, lowest index on ties.
    fn predict_window(&self, window: &[f64]) -> Result<Prediction, ClassifierError> {
        let expected = self.window.window_len * NUM_CHANNELS;
        if window.len() != expected {
            return Err(ClassifierError::Shape { expected, got: window.len() });
        }
        let d = self.distances(window);
        let mut best = 0;
        for k in 1..NUM_CLASSES {
            if d[k] < d[best] {
                best = k;
            }
        }
        let neg: [f64; NUM_CLASSES] = core::array::from_fn(|k| -d[k]);
        Ok(Prediction { probs: softmax(&neg), class: best })
    }
}
