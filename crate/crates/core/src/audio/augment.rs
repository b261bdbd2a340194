use rand::Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use super::{mean_square, AudioBuffer};
use crate::error::{Error, Result};

/// Online augmentation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Independent firing probability of each augmentation.
    pub apply_probability: f64,
    /// Additive-noise SNR is drawn uniformly from this range (dB).
    pub snr_db_range: (f64, f64),
    /// Candidate speed ratios; 1.0 must be present and is never drawn.
    pub speed_ratios: Vec<f64>,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            apply_probability: 0.6,
            snr_db_range: (0.0, 20.0),
            speed_ratios: vec![0.9, 1.0, 1.1],
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::InvalidConfig(format!(
                "apply_probability {} outside [0, 1]",
                self.apply_probability
            )));
        }
        if !self.speed_ratios.contains(&1.0) {
            return Err(Error::InvalidConfig("speed_ratios must contain 1.0".into()));
        }
        if let Some(r) = self.speed_ratios.iter().find(|&&r| r <= 0.0) {
            return Err(Error::InvalidSpeedRatio(*r));
        }
        if self.snr_db_range.0 > self.snr_db_range.1 {
            return Err(Error::InvalidConfig("snr_db_range is reversed".into()));
        }
        Ok(())
    }
}

/// Result of [`augment_online`].
#[derive(Debug, Clone)]
pub struct Augmented {
    pub audio: AudioBuffer,
    /// Speed ratio actually applied, 1.0 when speed perturbation did not fire.
    pub speed_ratio: f64,
    pub noise_applied: bool,
    pub reverb_applied: bool,
}

/// Mixes `noise` into `clean` at the requested SNR.
///
/// Noise shorter than the clean signal is tiled, longer noise is cropped.
/// Both powers are measured over the clean-length window.
pub fn add_noise(clean: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<AudioBuffer> {
    let p_clean = clean.power();
    if p_clean == 0.0 {
        return Err(Error::SilentSignal { what: "clean signal" });
    }
    if noise.is_empty() {
        return Err(Error::SilentSignal { what: "noise" });
    }
    let window: Vec<f32> = noise.samples.iter().copied().cycle().take(clean.len()).collect();
    let p_noise = mean_square(&window);
    if p_noise == 0.0 {
        return Err(Error::SilentSignal { what: "noise" });
    }
    let gain = (p_clean / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = clean
        .samples
        .iter()
        .zip(&window)
        .map(|(&c, &n)| (c as f64 + gain * n as f64) as f32)
        .collect();
    Ok(clean.with_samples(samples))
}

/// Convolves `dry` with `rir`, keeps the first `len(dry)` samples and scales
/// the result down if its peak exceeds 1.
pub fn reverberate(dry: &AudioBuffer, rir: &[f32]) -> Result<AudioBuffer> {
    if rir.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateImpulseResponse);
    }
    let mut wet = convolve_truncated(&dry.samples, rir);
    let peak = wet.iter().fold(0f64, |m, &v| m.max(v.abs()));
    if peak > 1.0 {
        wet.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(dry.with_samples(wet.into_iter().map(|v| v as f32).collect()))
}

const DIRECT_CONV_MAX_TAPS: usize = 64;

fn convolve_truncated(x: &[f32], h: &[f32]) -> Vec<f64> {
    let n = x.len();
    if h.len() <= DIRECT_CONV_MAX_TAPS {
        return (0..n)
            .map(|i| {
                h.iter()
                    .enumerate()
                    .take(i + 1)
                    .map(|(k, &hk)| hk as f64 * x[i - k] as f64)
                    .sum()
            })
            .collect();
    }
    let size = (n + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |s: &[f32]| {
        let mut v: Vec<Complex<f64>> = s.iter().map(|&r| Complex::new(r as f64, 0.0)).collect();
        v.resize(size, Complex::new(0.0, 0.0));
        v
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai *= bi;
    }
    inv.process(&mut a);
    a.iter().take(n).map(|c| c.re / size as f64).collect()
}

/// Resamples by linear interpolation so playback runs `ratio` times faster.
///
/// Output length is `round(len / ratio)` (at least one sample); the sample
/// rate is kept, so ratio 0.9 lengthens and 1.1 shortens the utterance.
pub fn speed_perturb(audio: &AudioBuffer, ratio: f64) -> Result<AudioBuffer> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidSpeedRatio(ratio));
    }
    if ratio == 1.0 {
        return Ok(audio.clone());
    }
    let out_len = ((audio.len() as f64 / ratio).round() as usize).max(1);
    Ok(audio.with_samples(linear_resample(&audio.samples, ratio, out_len)))
}

/// Reads `src` at positions `i * step` for `i in 0..out_len`.
pub(crate) fn linear_resample(src: &[f32], step: f64, out_len: usize) -> Vec<f32> {
    if src.is_empty() {
        return vec![0.0; out_len];
    }
    let last = src.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let lo = (pos.floor() as usize).min(last);
            let hi = (lo + 1).min(last);
            let frac = (pos - lo as f64).clamp(0.0, 1.0);
            (src[lo] as f64 * (1.0 - frac) + src[hi] as f64 * frac) as f32
        })
        .collect()
}

/// Applies noise, reverberation and speed perturbation, each independently
/// with probability `cfg.apply_probability`, in that order.
///
/// All three coin flips are drawn up front so the firing decisions do not
/// depend on pool contents; an augmentation whose pool is empty is skipped.
pub fn augment_online<R: Rng + ?Sized>(
    audio: &AudioBuffer,
    cfg: &AugmentConfig,
    noise_pool: &[AudioBuffer],
    rir_pool: &[Vec<f32>],
    rng: &mut R,
) -> Result<Augmented> {
    cfg.validate()?;
    let p = cfg.apply_probability;
    let fire_noise = rng.random_bool(p);
    let fire_reverb = rng.random_bool(p);
    let fire_speed = rng.random_bool(p);

    let mut out = audio.clone();
    let mut noise_applied = false;
    let mut reverb_applied = false;
    let mut speed_ratio = 1.0;

    if fire_noise && !noise_pool.is_empty() {
        let noise = &noise_pool[rng.random_range(0..noise_pool.len())];
        let (lo, hi) = cfg.snr_db_range;
        let snr = if hi > lo { rng.random_range(lo..hi) } else { lo };
        out = add_noise(&out, noise, snr)?;
        noise_applied = true;
    }
    if fire_reverb && !rir_pool.is_empty() {
        let rir = &rir_pool[rng.random_range(0..rir_pool.len())];
        out = reverberate(&out, rir)?;
        reverb_applied = true;
    }
    let candidates: Vec<f64> = cfg.speed_ratios.iter().copied().filter(|&r| r != 1.0).collect();
    if fire_speed && !candidates.is_empty() {
        speed_ratio = candidates[rng.random_range(0..candidates.len())];
        out = speed_perturb(&out, speed_ratio)?;
    }

    Ok(Augmented {
        audio: out,
        speed_ratio,
        noise_applied,
        reverb_applied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn buf(samples: Vec<f32>) -> AudioBuffer {
        AudioBuffer::new(samples, 16000)
    }

    fn tone(n: usize, freq: f32, amp: f32) -> AudioBuffer {
        buf((0..n)
            .map(|i| amp * (2.0 * std::f32::consts::PI * freq * i as f32 / 16000.0).sin())
            .collect())
    }

    #[test]
    fn zero_db_noise_matches_clean_power() {
        let clean = tone(4000, 440.0, 0.5);
        let noise = tone(4000, 1370.0, 0.1);
        let out = add_noise(&clean, &noise, 0.0).unwrap();
        let added: Vec<f32> = out.samples.iter().zip(&clean.samples).map(|(o, c)| o - c).collect();
        let rel = (mean_square(&added) - clean.power()).abs() / clean.power();
        assert!(rel < 1e-6, "relative power error {rel}");
    }

    #[test]
    fn ten_db_gain_on_unit_power_signals() {
        // Alternating +-1 has unit mean-square power.
        let clean = buf((0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect());
        let noise = buf(vec![1.0; 1000]);
        let out = add_noise(&clean, &noise, 10.0).unwrap();
        let gain = out.samples[0] - 1.0;
        assert!((gain as f64 - 10f64.powf(-0.5)).abs() < 1e-6);
        assert!((gain - 0.3162).abs() < 1e-4);
    }

    #[test]
    fn short_noise_is_tiled() {
        let clean = tone(1000, 300.0, 0.3);
        let noise = buf(vec![0.2, -0.2, 0.1]);
        let out = add_noise(&clean, &noise, 5.0).unwrap();
        assert_eq!(out.len(), clean.len());
    }

    #[test]
    fn silent_inputs_rejected() {
        let silent = buf(vec![0.0; 100]);
        let loud = tone(100, 300.0, 0.3);
        assert!(add_noise(&silent, &loud, 0.0).is_err());
        assert!(add_noise(&loud, &silent, 0.0).is_err());
    }

    #[test]
    fn reverb_unit_impulse_and_shift() {
        let dry = buf(vec![0.1, -0.2, 0.3, 0.4]);
        assert_eq!(reverberate(&dry, &[1.0]).unwrap().samples, dry.samples);
        let shifted = reverberate(&dry, &[0.0, 1.0]).unwrap();
        assert_eq!(shifted.samples, vec![0.0, 0.1, -0.2, 0.3]);
        assert!(reverberate(&dry, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn reverb_moving_average_on_constant() {
        let dry = buf(vec![0.5; 10]);
        let wet = reverberate(&dry, &[0.5, 0.5]).unwrap();
        for &v in &wet.samples[1..] {
            assert!((v - 0.5).abs() < 1e-7);
        }
        assert!((wet.samples[0] - 0.25).abs() < 1e-7);
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f32> = (0..500).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f32> = (0..200).map(|i| (-(i as f32) / 30.0).exp() * 0.1).collect();
        let fast = convolve_truncated(&x, &h);
        for i in [0usize, 1, 57, 199, 200, 499] {
            let direct: f64 = (0..=i.min(h.len() - 1))
                .map(|k| h[k] as f64 * x[i - k] as f64)
                .sum();
            assert!((fast[i] - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn speed_lengths() {
        let a = buf(vec![0.1; 16000]);
        assert_eq!(speed_perturb(&a, 1.0).unwrap(), a);
        assert_eq!(speed_perturb(&a, 0.9).unwrap().len(), 17778);
        assert_eq!(speed_perturb(&a, 1.1).unwrap().len(), 14545);
        assert!(speed_perturb(&a, 0.0).is_err());
        assert!(speed_perturb(&a, -1.0).is_err());
    }

    #[test]
    fn probability_zero_is_identity() {
        let a = tone(1600, 200.0, 0.5);
        let cfg = AugmentConfig { apply_probability: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = augment_online(&a, &cfg, &[tone(100, 900.0, 0.1)], &[vec![1.0, 0.3]], &mut rng)
            .unwrap();
        assert_eq!(out.audio, a);
        assert_eq!(out.speed_ratio, 1.0);
    }

    #[test]
    fn forced_speed_branch() {
        let a = tone(1600, 200.0, 0.5);
        let cfg = AugmentConfig {
            apply_probability: 1.0,
            speed_ratios: vec![0.9, 1.0],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let out = augment_online(&a, &cfg, &[], &[], &mut rng).unwrap();
            assert_eq!(out.speed_ratio, 0.9);
            assert!(!out.noise_applied && !out.reverb_applied);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = AugmentConfig { speed_ratios: vec![0.9, 1.1], ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig { apply_probability: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
