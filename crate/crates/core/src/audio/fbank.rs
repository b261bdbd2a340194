use std::io::{Read, Write};

use rustfft::{num_complex::Complex, FftPlanner};

use super::AudioBuffer;
use crate::error::{Error, Result};

pub const N_MELS: usize = 80;
const LOG_FLOOR: f64 = 1e-10;
const FBANK_MAGIC: [u8; 4] = *b"FBNK";

/// Frames x mel-bins log energies, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Vec<f64>,
    pub frames: usize,
    pub dims: usize,
    pub frame_shift_seconds: f64,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, frames: usize, dims: usize, frame_shift_seconds: f64) -> Self {
        assert_eq!(data.len(), frames * dims, "feature buffer size mismatch");
        Self { data, frames, dims, frame_shift_seconds }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dims..(t + 1) * self.dims]
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.data[t * self.dims + d]
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.dims];
        for t in 0..self.frames {
            for (m, v) in means.iter_mut().zip(self.row(t)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= self.frames.max(1) as f64);
        means
    }

    /// Contiguous frame range `[start, start + len)`.
    pub fn slice_frames(&self, start: usize, len: usize) -> FeatureMatrix {
        FeatureMatrix::new(
            self.data[start * self.dims..(start + len) * self.dims].to_vec(),
            len,
            self.dims,
            self.frame_shift_seconds,
        )
    }
}

/// Subtracts the per-dimension mean over this utterance's frames.
pub fn cmn(features: &FeatureMatrix) -> FeatureMatrix {
    let means = features.column_means();
    let mut out = features.clone();
    for row in out.data.chunks_mut(out.dims) {
        for (v, m) in row.iter_mut().zip(&means) {
            *v -= m;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FbankConfig {
    pub n_mels: usize,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
}

impl Default for FbankConfig {
    fn default() -> Self {
        Self { n_mels: N_MELS, frame_length_ms: 25.0, frame_shift_ms: 10.0 }
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-mel filters spanning 0 Hz to Nyquist, `n_mels x (n_fft/2+1)`.
fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let n_bins = n_fft / 2 + 1;
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / n_fft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Log mel filterbank energies followed by utterance-wise mean normalization.
///
/// Hann-windowed frames of `frame_length_ms` every `frame_shift_ms`, zero
/// padded to the next power of two, magnitude spectrum, mel filters, natural
/// log with a 1e-10 floor. `T = 1 + floor((len - win) / hop)`.
pub fn compute_fbank(audio: &AudioBuffer, cfg: &FbankConfig) -> Result<FeatureMatrix> {
    let sr = audio.sample_rate as f64;
    let win = (cfg.frame_length_ms * sr / 1000.0).round() as usize;
    let hop = (cfg.frame_shift_ms * sr / 1000.0).round() as usize;
    if win == 0 || hop == 0 {
        return Err(Error::InvalidConfig("frame length and shift must be positive".into()));
    }
    if audio.len() < win {
        return Err(Error::AudioTooShort { samples: audio.len(), frame_length: win });
    }
    let frames = 1 + (audio.len() - win) / hop;
    let n_fft = win.next_power_of_two();
    let window: Vec<f64> = (0..win)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (win - 1).max(1) as f64).cos())
        .collect();
    let filters = mel_filterbank(cfg.n_mels, n_fft, audio.sample_rate);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let mut data = Vec::with_capacity(frames * cfg.n_mels);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut mag = vec![0.0; n_fft / 2 + 1];
    for t in 0..frames {
        let frame = &audio.samples[t * hop..t * hop + win];
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for ((b, &s), w) in buf.iter_mut().zip(frame).zip(&window) {
            b.re = s as f64 * w;
        }
        fft.process(&mut buf);
        for (m, c) in mag.iter_mut().zip(&buf) {
            *m = c.norm();
        }
        for filt in &filters {
            let e: f64 = filt.iter().zip(&mag).map(|(w, m)| w * m).sum();
            data.push(e.max(LOG_FLOOR).ln());
        }
    }
    let raw = FeatureMatrix::new(data, frames, cfg.n_mels, hop as f64 / sr);
    Ok(cmn(&raw))
}

/// Processing stages of the feature front end, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontendStage {
    Resample,
    Fbank,
    Cmn,
}

/// Waveform to network-input feature pipeline. There is no voice activity
/// detection: every frame of the utterance reaches the network.
#[derive(Debug, Clone)]
pub struct Frontend {
    pub working_rate: u32,
    pub fbank: FbankConfig,
}

impl Default for Frontend {
    fn default() -> Self {
        Self { working_rate: 16000, fbank: FbankConfig::default() }
    }
}

impl Frontend {
    pub fn stages(&self) -> &'static [FrontendStage] {
        &[FrontendStage::Resample, FrontendStage::Fbank, FrontendStage::Cmn]
    }

    pub fn extract(&self, audio: &AudioBuffer) -> Result<FeatureMatrix> {
        let audio = super::wav::resample_to(audio, self.working_rate);
        compute_fbank(&audio, &self.fbank)
    }
}

/// Writes `FBNK | u32 T | u32 dim | T*dim f32`, all little-endian.
pub fn write_fbank<W: Write>(mut w: W, feats: &FeatureMatrix) -> Result<()> {
    w.write_all(&FBANK_MAGIC)?;
    w.write_all(&(feats.frames as u32).to_le_bytes())?;
    w.write_all(&(feats.dims as u32).to_le_bytes())?;
    for &v in &feats.data {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_fbank<R: Read>(mut r: R) -> Result<FeatureMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Truncated("fbank header".into()))?;
    if magic != FBANK_MAGIC {
        return Err(Error::BadMagic { expected: FBANK_MAGIC, found: magic });
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(|_| Error::Truncated("fbank header".into()))?;
    let frames = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word).map_err(|_| Error::Truncated("fbank header".into()))?;
    let dims = u32::from_le_bytes(word) as usize;
    let mut data = Vec::with_capacity(frames * dims);
    for _ in 0..frames * dims {
        r.read_exact(&mut word).map_err(|_| Error::Truncated("fbank payload".into()))?;
        data.push(f32::from_le_bytes(word) as f64);
    }
    Ok(FeatureMatrix::new(data, frames, dims, 0.01))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn white_noise(n: usize, seed: u64) -> AudioBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioBuffer::new((0..n).map(|_| rng.random_range(-0.5..0.5)).collect(), 16000)
    }

    #[test]
    fn one_second_gives_98_frames() {
        let f = compute_fbank(&white_noise(16000, 1), &FbankConfig::default()).unwrap();
        assert_eq!((f.frames, f.dims), (98, 80));
        assert!(f.data.iter().all(|v| v.is_finite()));
        for m in f.column_means() {
            assert!(m.abs() < 1e-9);
        }
    }

    #[test]
    fn too_short_is_error() {
        let err = compute_fbank(&white_noise(399, 1), &FbankConfig::default()).unwrap_err();
        assert!(matches!(err, Error::AudioTooShort { samples: 399, frame_length: 400 }));
    }

    #[test]
    fn silence_is_finite_and_floored() {
        let a = AudioBuffer::new(vec![0.0; 800], 16000);
        let f = compute_fbank(&a, &FbankConfig::default()).unwrap();
        assert!(f.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cmn_cases() {
        let c = FeatureMatrix::new(vec![3.0; 5 * 80], 5, 80, 0.01);
        assert!(cmn(&c).data.iter().all(|&v| v == 0.0));
        let single = FeatureMatrix::new((0..80).map(|i| i as f64).collect(), 1, 80, 0.01);
        assert!(cmn(&single).data.iter().all(|&v| v == 0.0));
        let zm = FeatureMatrix::new(
            (0..160).map(|i| if i < 80 { 1.0 } else { -1.0 }).collect(),
            2,
            80,
            0.01,
        );
        assert_eq!(cmn(&zm), zm);
    }

    #[test]
    fn fbnk_roundtrip() {
        let f = compute_fbank(&white_noise(4000, 5), &FbankConfig::default()).unwrap();
        let mut bytes = Vec::new();
        write_fbank(&mut bytes, &f).unwrap();
        assert_eq!(&bytes[..4], b"FBNK");
        assert_eq!(bytes.len(), 12 + f.frames * 80 * 4);
        let back = read_fbank(bytes.as_slice()).unwrap();
        assert_eq!((back.frames, back.dims), (f.frames, 80));
        for (a, b) in back.data.iter().zip(&f.data) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn frontend_keeps_every_frame() {
        // Half silence, half noise: without VAD nothing is dropped.
        let mut a = white_noise(16000, 9);
        a.samples[..8000].iter_mut().for_each(|v| *v = 0.0);
        let fe = Frontend::default();
        assert_eq!(fe.stages(), &[FrontendStage::Resample, FrontendStage::Fbank, FrontendStage::Cmn]);
        assert_eq!(fe.extract(&a).unwrap().frames, 98);
    }

    proptest! {
        #[test]
        fn cmn_is_idempotent(rows in 1usize..12, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = FeatureMatrix::new(
                (0..rows * 80).map(|_| rng.random_range(-20.0..20.0)).collect(), rows, 80, 0.01);
            let once = cmn(&m);
            let twice = cmn(&once);
            for (a, b) in once.data.iter().zip(&twice.data) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
