use std::fmt;
use std::str::FromStr;

use super::{cosine_score, mean_vector, AsNorm};
use crate::audio::{concatenate, AudioBuffer};
use crate::error::{Error, Result};
use crate::net::Embedder;

/// How several enrollment utterances of one speaker become one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    /// Embed the concatenated enrollment audio once.
    UttConcat,
    /// Average the per-utterance embeddings.
    #[default]
    EmbAvg,
    /// Average the per-utterance scores.
    ScoreAvg,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::UttConcat, Strategy::EmbAvg, Strategy::ScoreAvg];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::UttConcat => "utt-concat",
            Strategy::EmbAvg => "emb-avg",
            Strategy::ScoreAvg => "score-avg",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "utt-concat" | "uttconcat" => Ok(Strategy::UttConcat),
            "emb-avg" | "embavg" => Ok(Strategy::EmbAvg),
            "score-avg" | "scoreavg" => Ok(Strategy::ScoreAvg),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Where AS-norm sits relative to the averaging in [`Strategy::ScoreAvg`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreAvgNorm {
    /// Normalize each enrollment utterance's score, then average.
    #[default]
    BeforeAverage,
    /// Average raw scores, then normalize with the averaged embedding's
    /// enroll-side statistics.
    AfterAverage,
}

impl FromStr for ScoreAvgNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "before" => Ok(ScoreAvgNorm::BeforeAverage),
            "after" => Ok(ScoreAvgNorm::AfterAverage),
            other => Err(Error::InvalidConfig(format!("score_avg_norm must be before|after, got {other:?}"))),
        }
    }
}

/// Embeddings available for one enrollment speaker.
#[derive(Debug, Clone, Default)]
pub struct EnrollmentMaterials<'a> {
    pub utterances: Vec<&'a [f32]>,
    /// Embedding of the concatenated enrollment audio, needed by UttConcat.
    pub concatenated: Option<&'a [f32]>,
}

/// Concatenates enrollment audio and embeds it once; features (and their
/// mean normalization) are computed over the whole concatenation.
pub fn embed_concatenated(utterances: &[AudioBuffer], embedder: &dyn Embedder) -> Result<Vec<f32>> {
    embedder.embed(&concatenate(utterances)?)
}

fn score(enroll: &[f32], test: &[f32], norm: Option<&AsNorm>) -> Result<f64> {
    let raw = cosine_score(enroll, test)?;
    match norm {
        Some(n) => n.normalize(raw, enroll, test),
        None => Ok(raw),
    }
}

/// Scores one trial under the chosen enrollment strategy, with optional
/// AS-norm.
pub fn combine_enrollment(
    strategy: Strategy,
    materials: &EnrollmentMaterials<'_>,
    test: &[f32],
    norm: Option<&AsNorm>,
    score_avg_norm: ScoreAvgNorm,
) -> Result<f64> {
    if materials.utterances.is_empty() && materials.concatenated.is_none() {
        return Err(Error::EmptyEnrollment);
    }
    match strategy {
        Strategy::UttConcat => {
            let concat = match (materials.concatenated, materials.utterances.as_slice()) {
                (Some(c), _) => c,
                // One utterance is its own concatenation.
                (None, [single]) => single,
                (None, _) => {
                    return Err(Error::InvalidConfig(
                        "utt-concat needs an embedding of the concatenated enrollment audio".into(),
                    ))
                }
            };
            score(concat, test, norm)
        }
        Strategy::EmbAvg => {
            if materials.utterances.is_empty() {
                return Err(Error::EmptyEnrollment);
            }
            score(&mean_vector(&materials.utterances)?, test, norm)
        }
        Strategy::ScoreAvg => {
            let utts = &materials.utterances;
            if utts.is_empty() {
                return Err(Error::EmptyEnrollment);
            }
            let n = utts.len() as f64;
            match (norm, score_avg_norm) {
                (Some(nm), ScoreAvgNorm::AfterAverage) => {
                    let raw = utts.iter().map(|u| cosine_score(u, test)).sum::<Result<f64>>()? / n;
                    nm.normalize(raw, &mean_vector(utts)?, test)
                }
                _ => Ok(utts.iter().map(|u| score(u, test, norm)).sum::<Result<f64>>()? / n),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{Cohort, CohortSelection};

    fn cohort() -> AsNorm {
        let c = Cohort {
            speaker_ids: (0..4).map(|i| i.to_string()).collect(),
            vectors: vec![
                vec![1.0, 0.2, 0.0],
                vec![0.0, 1.0, 0.3],
                vec![0.4, 0.0, 1.0],
                vec![-1.0, 0.5, 0.5],
            ],
            excluded: vec![],
        };
        AsNorm::new(&c, CohortSelection::TopK(3)).unwrap()
    }

    #[test]
    fn single_utterance_all_strategies_agree() {
        let e = [0.3f32, -0.7, 0.2];
        let t = [0.1f32, -0.5, 0.9];
        let m = EnrollmentMaterials { utterances: vec![&e], concatenated: None };
        for norm in [None, Some(cohort())] {
            let scores: Vec<f64> = Strategy::ALL
                .iter()
                .map(|&s| combine_enrollment(s, &m, &t, norm.as_ref(), ScoreAvgNorm::default()).unwrap())
                .collect();
            assert!((scores[0] - scores[1]).abs() < 1e-6 && (scores[1] - scores[2]).abs() < 1e-6);
        }
    }

    #[test]
    fn emb_avg_of_copies_equals_single() {
        let e = [0.3f32, -0.7, 0.2];
        let t = [0.1f32, -0.5, 0.9];
        let one = EnrollmentMaterials { utterances: vec![&e], ..Default::default() };
        let many = EnrollmentMaterials { utterances: vec![&e, &e, &e], ..Default::default() };
        let a = combine_enrollment(Strategy::EmbAvg, &one, &t, None, ScoreAvgNorm::default()).unwrap();
        let b = combine_enrollment(Strategy::EmbAvg, &many, &t, None, ScoreAvgNorm::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn score_avg_is_arithmetic_mean() {
        // Scores 0.2 and 0.4 against the unit test vector (1, 0).
        let t = [1.0f32, 0.0];
        let a = [0.2f32, (1.0f32 - 0.04).sqrt()];
        let b = [0.4f32, (1.0f32 - 0.16).sqrt()];
        let m = EnrollmentMaterials { utterances: vec![&a, &b], ..Default::default() };
        let s = combine_enrollment(Strategy::ScoreAvg, &m, &t, None, ScoreAvgNorm::default()).unwrap();
        assert!((s - 0.3).abs() < 1e-7);
    }

    #[test]
    fn empty_and_missing_concat() {
        let t = [1.0f32, 0.0];
        let empty = EnrollmentMaterials::default();
        assert!(matches!(
            combine_enrollment(Strategy::EmbAvg, &empty, &t, None, ScoreAvgNorm::default()),
            Err(Error::EmptyEnrollment)
        ));
        let a = [1.0f32, 1.0];
        let m = EnrollmentMaterials { utterances: vec![&a, &a], concatenated: None };
        assert!(combine_enrollment(Strategy::UttConcat, &m, &t, None, ScoreAvgNorm::default()).is_err());
    }

    #[test]
    fn strategy_names() {
        for s in Strategy::ALL {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
    }
}
