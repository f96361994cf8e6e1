//! Mini-batch Adam on windowed cross-entropy.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{fit_centroids, CentroidModel, ClassifierError, Model, ModelConfig};
use crate::features::{
    filter_series, fit_scaler, preprocess, FeatureTensor, PreprocessFlags, ScalerStats, WindowConfig,
};
use crate::sensor::{Channels, Recording};
use crate::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 16, epochs: 30, seed: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss over the training windows before the first step.
    pub initial_loss: f64,
    /// Mean batch loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean loss over the training windows after the last step.
    pub final_loss: f64,
    pub n_windows: usize,
}

/// Windowed, preprocessed training data with the scaler fitted on it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub scaler: Option<ScalerStats>,
    pub tensors: Vec<(FeatureTensor, usize)>,
}

impl TrainingSet {
    pub fn windows(&self) -> Vec<(&[f64], usize)> {
        self.tensors.iter().flat_map(|(t, l)| t.windows().map(move |w| (w, *l))).collect()
    }
}

/// Checks labels, fits the scaler on this split only and windows every
/// recording.
pub fn prepare_split(
    recordings: &[Recording],
    window: WindowConfig,
    flags: &PreprocessFlags,
) -> Result<TrainingSet, ClassifierError> {
    if recordings.is_empty() {
        return Err(ClassifierError::EmptySplit);
    }
    let mut present = [false; NUM_CLASSES];
    let mut labels = Vec::with_capacity(recordings.len());
    for r in recordings {
        let label =
            r.meta.class_label.ok_or_else(|| ClassifierError::MissingLabel(r.meta.recording_id.clone()))? as usize;
        if label >= NUM_CLASSES {
            return Err(ClassifierError::BadLabel(label));
        }
        present[label] = true;
        labels.push(label);
    }
    if let Some(absent) = present.iter().position(|p| !p) {
        return Err(ClassifierError::ClassAbsent(absent));
    }
    let scaler = if flags.scale {
        let filtered: Vec<Vec<Channels>> = recordings
            .iter()
            .map(|r| filter_series(&r.series(), flags, r.meta.sample_rate_hz))
            .collect::<Result<_, _>>()?;
        Some(fit_scaler(filtered.iter().map(|s| s.as_slice()))?)
    } else {
        None
    };
    let tensors = recordings
        .iter()
        .zip(labels)
        .map(|(r, l)| Ok((preprocess(r, window, scaler.as_ref(), flags)?, l)))
        .collect::<Result<_, ClassifierError>>()?;
    Ok(TrainingSet { scaler, tensors })
}

/// Nearest-centroid baseline on the same split and preprocessing.
pub fn train_centroids(
    recordings: &[Recording],
    window: WindowConfig,
    flags: &PreprocessFlags,
) -> Result<CentroidModel, ClassifierError> {
    let set = prepare_split(recordings, window, flags)?;
    fit_centroids(&set.tensors, window, *flags, set.scaler)
}

fn mean_loss(model: &Model, data: &[(&[f64], usize)]) -> Result<f64, ClassifierError> {
    let mut total = 0.0;
    for (w, l) in data {
        total += model.loss(w, *l)?;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Trains a transformer from scratch. The same seed gives bit-identical
/// parameters whatever the thread count.
pub fn train(
    recordings: &[Recording],
    model_cfg: ModelConfig,
    window: WindowConfig,
    flags: &PreprocessFlags,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport), ClassifierError> {
    let set = prepare_split(recordings, window, flags)?;
    let data = set.windows();
    if data.is_empty() {
        return Err(ClassifierError::EmptySplit);
    }
    let model = Model::init(model_cfg, window, *flags, set.scaler.clone(), cfg.seed)?;
    train_on_windows(model, &data, cfg)
}

/// Runs Adam over already-windowed data, starting from `model`.
pub fn train_on_windows(
    mut model: Model,
    data: &[(&[f64], usize)],
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport), ClassifierError> {
    if cfg.batch_size == 0 {
        return Err(ClassifierError::InvalidConfig("batch_size must be positive".into()));
    }
    let initial_loss = mean_loss(&model, data)?;
    let n = model.params().len();
    let mut m = alloc::vec![0.0; n];
    let mut v = alloc::vec![0.0; n];
    let mut step = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| data[i]).collect();
            let (loss, grad) = model.loss_and_grad(&batch)?;
            epoch_loss += loss;
            batches += 1;
            step += 1;
            let bc1 = 1.0 - libm::pow(cfg.beta1, step as f64);
            let bc2 = 1.0 - libm::pow(cfg.beta2, step as f64);
            let params = model.params_mut();
            for i in 0..n {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                params[i] -= cfg.lr * mhat / (libm::sqrt(vhat) + cfg.eps);
            }
        }
        epoch_losses.push(epoch_loss / batches.max(1) as f64);
    }
    model.quantize();
    let final_loss = mean_loss(&model, data)?;
    Ok((model, TrainReport { initial_loss, epoch_losses, final_loss, n_windows: data.len() }))
}
