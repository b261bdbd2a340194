//! Waveform handling: buffers, short-utterance concatenation, online
//! augmentation and the log-mel filterbank front end.

mod augment;
mod fbank;
mod wav;

pub use augment::{
    add_noise, augment_online, reverberate, speed_perturb, AugmentConfig, Augmented,
};
pub use fbank::{
    cmn, compute_fbank, read_fbank, write_fbank, FbankConfig, FeatureMatrix, Frontend,
    FrontendStage, N_MELS,
};
pub use wav::{read_wav, write_wav};

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Mono waveform with the identifiers used for grouping and labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub utterance_id: String,
    pub speaker_id: String,
    pub genre: String,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            utterance_id: String::new(),
            speaker_id: String::new(),
            genre: String::new(),
        }
    }

    pub fn with_ids(
        mut self,
        utterance_id: impl Into<String>,
        speaker_id: impl Into<String>,
        genre: impl Into<String>,
    ) -> Self {
        self.utterance_id = utterance_id.into();
        self.speaker_id = speaker_id.into();
        self.genre = genre.into();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square amplitude.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    /// Same ids and rate, new samples.
    pub(crate) fn with_samples(&self, samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            utterance_id: self.utterance_id.clone(),
            speaker_id: self.speaker_id.clone(),
            genre: self.genre.clone(),
        }
    }
}

pub(crate) fn mean_square(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / x.len() as f64
}

/// Concatenates the audio of several buffers into one, keeping the ids of
/// the first buffer and joining utterance ids with `+`.
pub fn concatenate(parts: &[AudioBuffer]) -> Result<AudioBuffer> {
    let first = parts.first().ok_or(Error::EmptyEnrollment)?;
    check_rates(parts)?;
    let mut out = first.with_samples(Vec::with_capacity(parts.iter().map(|p| p.len()).sum()));
    for p in parts {
        out.samples.extend_from_slice(&p.samples);
    }
    out.utterance_id = parts
        .iter()
        .map(|p| p.utterance_id.as_str())
        .collect::<Vec<_>>()
        .join("+");
    Ok(out)
}

fn check_rates(utts: &[AudioBuffer]) -> Result<()> {
    if let Some(first) = utts.first() {
        if let Some(other) = utts.iter().find(|u| u.sample_rate != first.sample_rate) {
            return Err(Error::MixedSampleRates {
                first: first.sample_rate,
                other: other.sample_rate,
            });
        }
    }
    Ok(())
}

/// Merges short training utterances of the same speaker and genre.
///
/// Groups are keyed by `(speaker_id, genre)` and visited in key order. Inside
/// a group utterances are taken in lexicographic `utterance_id` order; those
/// already at least `min_duration` seconds long pass through untouched, the
/// rest are accumulated greedily until the running concatenation reaches
/// `min_duration`. A trailing remainder that never reaches it is emitted as is.
pub fn concat_short_utterances(
    utts: &[AudioBuffer],
    min_duration: f64,
) -> Result<Vec<AudioBuffer>> {
    check_rates(utts)?;
    let mut groups: BTreeMap<(&str, &str), Vec<&AudioBuffer>> = BTreeMap::new();
    for u in utts {
        groups
            .entry((u.speaker_id.as_str(), u.genre.as_str()))
            .or_default()
            .push(u);
    }

    let mut out = Vec::new();
    for (_, mut members) in groups {
        members.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
        let mut pending: Vec<AudioBuffer> = Vec::new();
        let mut pending_secs = 0.0;
        for u in members {
            if u.duration_seconds() >= min_duration {
                out.push(u.clone());
                continue;
            }
            pending_secs += u.duration_seconds();
            pending.push(u.clone());
            if pending_secs >= min_duration {
                out.push(concatenate(&pending)?);
                pending.clear();
                pending_secs = 0.0;
            }
        }
        if !pending.is_empty() {
            out.push(concatenate(&pending)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str, spk: &str, genre: &str, secs: f64) -> AudioBuffer {
        let n = (secs * 16000.0).round() as usize;
        AudioBuffer::new(vec![0.1; n], 16000).with_ids(id, spk, genre)
    }

    #[test]
    fn three_short_utterances_merge_into_one() {
        let utts = vec![
            utt("c", "s1", "speech", 2.0),
            utt("a", "s1", "speech", 2.0),
            utt("b", "s1", "speech", 2.0),
        ];
        let out = concat_short_utterances(&utts, 5.0).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].duration_seconds() - 6.0).abs() < 1e-9);
        assert_eq!(out[0].utterance_id, "a+b+c");
    }

    #[test]
    fn long_utterance_passes_through() {
        let utts = vec![utt("a", "s1", "speech", 6.0)];
        let out = concat_short_utterances(&utts, 5.0).unwrap();
        assert_eq!(out, utts);
    }

    #[test]
    fn groups_never_mix() {
        let utts = vec![
            utt("a", "s1", "speech", 3.0),
            utt("b", "s1", "singing", 3.0),
            utt("c", "s2", "speech", 3.0),
        ];
        let out = concat_short_utterances(&utts, 5.0).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn mixed_rates_rejected() {
        let mut b = utt("b", "s1", "speech", 1.0);
        b.sample_rate = 8000;
        let err = concat_short_utterances(&[utt("a", "s1", "speech", 1.0), b], 5.0).unwrap_err();
        assert!(err.to_string().contains("8000"));
    }
}
