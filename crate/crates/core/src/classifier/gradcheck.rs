//! Finite-difference check of the analytic gradient.

use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, Model};

/// Denominator floor for the relative error, so parameters whose true
/// gradient is zero compare by absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradScope {
    All,
    /// Only the MLP head; the encoder is held fixed.
    HeadOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    pub all_finite: bool,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares backprop with central differences `(L(p+h) - L(p-h)) / 2h` on
/// `samples` parameters drawn without replacement.
pub fn gradient_check(
    model: &Model,
    batch: &[(&[f64], usize)],
    h: f64,
    samples: usize,
    seed: u64,
    scope: GradScope,
) -> Result<GradCheckReport, ClassifierError> {
    let (_, analytic) = model.loss_and_grad(batch)?;
    let range = match scope {
        GradScope::All => 0..model.params().len(),
        GradScope::HeadOnly => model.layout().head_range(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = samples.min(range.len());
    let picked: Vec<usize> = sample(&mut rng, range.len(), count).into_iter().map(|i| range.start + i).collect();

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        checked: 0,
        all_finite: analytic.iter().all(|g| g.is_finite()),
    };
    for idx in picked {
        let original = probe.params()[idx];
        probe.params_mut()[idx] = original + h;
        let plus = probe.batch_loss(batch)?;
        probe.params_mut()[idx] = original - h;
        let minus = probe.batch_loss(batch)?;
        probe.params_mut()[idx] = original;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = relative_error(analytic[idx], numeric);
        report.max_abs_error = report.max_abs_error.max((analytic[idx] - numeric).abs());
        if rel > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = rel;
            report.worst_index = idx;
        }
        report.checked += 1;
    }
    Ok(report)
}
