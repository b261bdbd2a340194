use rand::Rng;

use crate::audio::FeatureMatrix;
use crate::error::{Error, Result};

/// One training stage: epoch budget, segment length and learning-rate
/// endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagePlan {
    pub epochs: usize,
    pub segment_seconds: f64,
    pub lr_init: f64,
    pub lr_final: f64,
    pub speed_perturb_enabled: bool,
}

impl StagePlan {
    pub fn stage_one() -> Self {
        Self { epochs: 165, segment_seconds: 2.0, lr_init: 0.1, lr_final: 0.00005, speed_perturb_enabled: true }
    }

    pub fn stage_two() -> Self {
        Self { epochs: 5, segment_seconds: 6.0, lr_init: 0.0001, lr_final: 0.000025, speed_perturb_enabled: false }
    }

    pub fn with_epochs(self, epochs: usize) -> Self {
        Self { epochs, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr_final > 0.0 && self.lr_init >= self.lr_final && self.lr_init.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rates must satisfy lr_init >= lr_final > 0 (got {} -> {})",
                self.lr_init, self.lr_final
            )));
        }
        if !(self.segment_seconds > 0.0) {
            return Err(Error::InvalidConfig("segment length must be positive".into()));
        }
        Ok(())
    }
}

/// `lr_init * (lr_final / lr_init)^(epoch / epochs)`, evaluated
/// continuously; `epoch` is clamped to `[0, epochs]`.
pub fn lr_at(epoch: f64, plan: &StagePlan) -> f64 {
    if plan.epochs == 0 || epoch <= 0.0 {
        return plan.lr_init;
    }
    let e = plan.epochs as f64;
    if epoch >= e {
        return plan.lr_final;
    }
    plan.lr_init * (plan.lr_final / plan.lr_init).powf(epoch / e)
}

pub const SPEED_RATIOS: [f64; 3] = [1.0, 0.9, 1.1];

/// Class index of a speaker seen at a given speed ratio. Perturbed copies
/// count as new speakers: 0.9 adds `base_speakers`, 1.1 adds twice that.
pub fn expand_speed_label(speaker_index: usize, ratio: f64, base_speakers: usize) -> Result<usize> {
    if speaker_index >= base_speakers {
        return Err(Error::ClassOutOfRange { index: speaker_index, classes: base_speakers });
    }
    let slot = SPEED_RATIOS
        .iter()
        .position(|&r| (r - ratio).abs() < 1e-9)
        .ok_or(Error::UnknownSpeedRatio(ratio))?;
    Ok(speaker_index + slot * base_speakers)
}

/// Total class count once every speaker has three speed copies.
pub fn expanded_class_count(base_speakers: usize) -> usize {
    SPEED_RATIOS.len() * base_speakers
}

/// A contiguous window of `round(seconds / frame_shift)` frames with a
/// uniformly drawn start. Short inputs are read cyclically.
pub fn sample_segment<R: Rng + ?Sized>(
    features: &FeatureMatrix,
    seconds: f64,
    frame_shift: f64,
    rng: &mut R,
) -> FeatureMatrix {
    let want = (seconds / frame_shift).round() as usize;
    let frames = features.frames;
    if frames >= want {
        let start = rng.random_range(0..=frames - want);
        return features.slice_frames(start, want);
    }
    let start = if frames == 0 { 0 } else { rng.random_range(0..frames) };
    let mut data = Vec::with_capacity(want * features.dims);
    for i in 0..want {
        if frames > 0 {
            data.extend_from_slice(features.row((start + i) % frames));
        } else {
            data.extend(std::iter::repeat_n(0.0, features.dims));
        }
    }
    FeatureMatrix::new(data, want, features.dims, features.frame_shift_seconds)
}
