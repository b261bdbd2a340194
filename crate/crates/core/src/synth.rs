//! Seeded synthetic data: Gaussian embedding clusters for head training and
//! formant-synthesized voices for end-to-end runs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::audio::AudioBuffer;
use crate::train::Example;

/// Class centers for Gaussian embedding clusters.
///
/// Centers lie on orthonormal directions (for `classes <= dim`) scaled so
/// that every pair is `separation` apart, with unit noise norm: each
/// coordinate gets noise of std `1 / sqrt(dim)`.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub centers: Vec<Vec<f64>>,
    pub dim: usize,
}

impl ClusterModel {
    pub fn new(classes: usize, dim: usize, separation: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes);
        for _ in 0..classes {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            // Gram-Schmidt while there is room; beyond `dim` classes the
            // random directions are only nearly orthogonal.
            if basis.len() < dim {
                for b in &basis {
                    let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
                }
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
        let radius = separation / 2f64.sqrt();
        let centers = basis.into_iter().map(|b| b.into_iter().map(|x| x * radius).collect()).collect();
        Self { centers, dim }
    }

    pub fn classes(&self) -> usize {
        self.centers.len()
    }

    /// `per_class` points for every class, class-major.
    pub fn sample<R: Rng + ?Sized>(&self, per_class: usize, rng: &mut R) -> Vec<Example> {
        let noise = Normal::new(0.0, 1.0 / (self.dim as f64).sqrt()).expect("finite std");
        let mut out = Vec::with_capacity(per_class * self.classes());
        for (label, c) in self.centers.iter().enumerate() {
            for _ in 0..per_class {
                let embedding = c.iter().map(|x| x + noise.sample(rng)).collect();
                out.push(Example { embedding, label });
            }
        }
        out
    }
}

/// Shorthand for one draw of [`ClusterModel`] with centers and noise from
/// the same seed.
pub fn gaussian_clusters(classes: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> Vec<Example> {
    let model = ClusterModel::new(classes, dim, separation, seed);
    model.sample(per_class, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15))
}

/// Vowel formants (F1, F2, F3) of an average adult voice, in Hz.
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [530.0, 1840.0, 2480.0],
    [270.0, 2290.0, 3010.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
];

/// Source and vocal-tract parameters of one synthetic speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceProfile {
    pub speaker_id: String,
    pub f0: f64,
    /// Per-vowel formant frequencies after the speaker's tract scaling.
    pub vowels: Vec<[f64; 3]>,
    pub bandwidths: [f64; 3],
    /// One-pole coefficient applied to the glottal source.
    pub tilt: f64,
}

impl VoiceProfile {
    pub fn random<R: Rng + ?Sized>(speaker_id: impl Into<String>, rng: &mut R) -> Self {
        let f0 = rng.random_range(90.0..260.0);
        let tract = rng.random_range(0.85..1.2);
        let vowels = VOWELS
            .iter()
            .map(|v| {
                let mut f = [0.0; 3];
                for (k, hz) in v.iter().enumerate() {
                    f[k] = hz * tract * rng.random_range(0.9..1.1);
                }
                f
            })
            .collect();
        let bandwidths = [rng.random_range(50.0..110.0), rng.random_range(70.0..140.0), rng.random_range(100.0..200.0)];
        Self { speaker_id: speaker_id.into(), f0, vowels, bandwidths, tilt: rng.random_range(0.6..0.95) }
    }
}

fn resonate(x: &mut [f64], freq: f64, bandwidth: f64, rate: f64) {
    let r = (-PI * bandwidth / rate).exp();
    let a1 = 2.0 * r * (2.0 * PI * freq / rate).cos();
    let a2 = -r * r;
    let gain = 1.0 - r;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = gain * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// A few seconds of vowel-like speech from `voice`: a jittered pulse train
/// through a three-formant cascade, switching vowels every 120-300 ms.
pub fn synth_utterance<R: Rng + ?Sized>(
    voice: &VoiceProfile,
    utterance_id: &str,
    seconds: f64,
    sample_rate: u32,
    rng: &mut R,
) -> AudioBuffer {
    let rate = sample_rate as f64;
    let n = (seconds * rate).round() as usize;
    let drift = rng.random_range(0.95..1.05);
    let mut out = vec![0.0f64; n];
    let mut pos = 0;
    while pos < n {
        let seg = ((rng.random_range(0.12..0.3) * rate) as usize).min(n - pos);
        let formants = voice.vowels[rng.random_range(0..voice.vowels.len())];
        let mut src = vec![0.0f64; seg];
        let mut phase = rng.random_range(0.0..1.0);
        let mut lp = 0.0;
        for s in src.iter_mut() {
            let f0 = voice.f0 * drift * (1.0 + 0.01 * rng.sample::<f64, _>(StandardNormal));
            phase += f0 / rate;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            lp = voice.tilt * lp + pulse + 0.02 * rng.sample::<f64, _>(StandardNormal);
            *s = lp;
        }
        for (f, b) in formants.iter().zip(&voice.bandwidths) {
            resonate(&mut src, *f, *b, rate);
        }
        // Short fades keep segment joins from clicking.
        let fade = (0.005 * rate) as usize;
        for i in 0..fade.min(seg / 2) {
            let w = i as f64 / fade as f64;
            src[i] *= w;
            src[seg - 1 - i] *= w;
        }
        out[pos..pos + seg].copy_from_slice(&src);
        pos += seg;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let gain = rng.random_range(0.3..0.7) / peak;
    let samples: Vec<f32> = out.into_iter().map(|v| (v * gain) as f32).collect();
    AudioBuffer::new(samples, sample_rate).with_ids(utterance_id, voice.speaker_id.clone(), "speech")
}

/// Low-passed Gaussian noise with unit-order amplitude.
pub fn synth_noise<R: Rng + ?Sized>(seconds: f64, sample_rate: u32, rng: &mut R) -> AudioBuffer {
    let n = (seconds * sample_rate as f64).round() as usize;
    let pole = rng.random_range(0.0..0.9);
    let mut lp = 0.0;
    let samples: Vec<f32> = (0..n)
        .map(|_| {
            lp = pole * lp + (1.0 - pole) * rng.sample::<f64, _>(StandardNormal);
            lp as f32
        })
        .collect();
    AudioBuffer::new(samples, sample_rate).with_ids("noise", "", "noise")
}

/// Exponentially decaying random impulse response with a unit direct path.
pub fn synth_rir<R: Rng + ?Sized>(taps: usize, decay: f64, rng: &mut R) -> Vec<f32> {
    let mut h: Vec<f32> = (0..taps)
        .map(|i| (0.3 * (-(i as f64) / decay).exp() * rng.sample::<f64, _>(StandardNormal)) as f32)
        .collect();
    if let Some(first) = h.first_mut() {
        *first = 1.0;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_centers_are_equidistant() {
        let m = ClusterModel::new(16, 256, 4.0, 3);
        for i in 0..16 {
            for j in 0..i {
                let d: f64 = m.centers[i].iter().zip(&m.centers[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!((d - 4.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn noise_norm_is_about_one() {
        let m = ClusterModel::new(1, 256, 4.0, 0);
        let pts = m.sample(200, &mut ChaCha8Rng::seed_from_u64(1));
        let mean_sq: f64 = pts
            .iter()
            .map(|p| p.embedding.iter().zip(&m.centers[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .sum::<f64>()
            / 200.0;
        assert!((mean_sq - 1.0).abs() < 0.05);
    }

    #[test]
    fn voice_is_deterministic_and_bounded() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let v1 = VoiceProfile::random("s1", &mut r1);
        let v2 = VoiceProfile::random("s1", &mut r2);
        let a = synth_utterance(&v1, "u", 0.5, 16000, &mut r1);
        let b = synth_utterance(&v2, "u", 0.5, 16000, &mut r2);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.len(), 8000);
        assert!(a.samples.iter().all(|s| s.abs() <= 0.7));
        assert_eq!(a.speaker_id, "s1");
    }
}
