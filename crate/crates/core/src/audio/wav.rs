use std::path::Path;

use super::augment::linear_resample;
use super::AudioBuffer;
use crate::error::{Error, Result};

/// Reads a 16-bit PCM mono WAV file and resamples it to `working_rate`.
pub fn read_wav(path: impl AsRef<Path>, working_rate: u32) -> Result<AudioBuffer> {
    let mut reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int
    {
        return Err(Error::InvalidConfig(format!(
            "{}: expected 16-bit PCM mono, found {} channel(s) at {} bits",
            path.as_ref().display(),
            spec.channels,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let id = path
        .as_ref()
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let audio = AudioBuffer::new(samples, spec.sample_rate).with_ids(id, "", "");
    Ok(resample_to(&audio, working_rate))
}

/// Writes a buffer as 16-bit PCM mono, clipping to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in &audio.samples {
        w.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

pub(crate) fn resample_to(audio: &AudioBuffer, rate: u32) -> AudioBuffer {
    if audio.sample_rate == rate || audio.is_empty() {
        return audio.clone();
    }
    let step = audio.sample_rate as f64 / rate as f64;
    let out_len = ((audio.len() as f64 / step).round() as usize).max(1);
    let mut out = audio.with_samples(linear_resample(&audio.samples, step, out_len));
    out.sample_rate = rate;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_roundtrip_and_resample() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("utt1.wav");
        let a = AudioBuffer::new((0..800).map(|i| ((i % 50) as f32 - 25.0) / 50.0).collect(), 8000);
        write_wav(&path, &a).unwrap();
        let same = read_wav(&path, 8000).unwrap();
        assert_eq!(same.utterance_id, "utt1");
        assert_eq!(same.len(), 800);
        for (x, y) in same.samples.iter().zip(&a.samples) {
            assert!((x - y).abs() < 1e-4);
        }
        let up = read_wav(&path, 16000).unwrap();
        assert_eq!((up.sample_rate, up.len()), (16000, 1600));
    }
}
