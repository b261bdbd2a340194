use std::path::Path;

use super::{write_atomic, TrialSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreLine {
    pub enroll_speaker: String,
    pub test_utterance: String,
    pub score: f64,
}

/// One `enroll test score` line per trial, in trial order. Scores use the
/// shortest representation that round-trips, so reruns are byte-identical.
pub fn format_scores(trials: &TrialSet, scores: &[f64]) -> Result<String> {
    if trials.len() != scores.len() {
        return Err(Error::Misaligned(format!(
            "{} trials but {} scores",
            trials.len(),
            scores.len()
        )));
    }
    let mut out = String::with_capacity(trials.len() * 40);
    for (t, s) in trials.trials.iter().zip(scores) {
        out.push_str(&format!("{} {} {}\n", t.enroll_speaker, t.test_utterance, s));
    }
    Ok(out)
}

pub fn write_scores(path: impl AsRef<Path>, trials: &TrialSet, scores: &[f64]) -> Result<()> {
    write_atomic(path, format_scores(trials, scores)?.as_bytes())
}

pub fn parse_scores(text: &str, source: &Path) -> Result<Vec<ScoreLine>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { path: source.to_path_buf(), line: i + 1, msg };
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", toks.len())));
        }
        let score: f64 = toks[2].parse().map_err(|_| err(format!("bad score {:?}", toks[2])))?;
        if !score.is_finite() {
            return Err(err("score is not finite".into()));
        }
        out.push(ScoreLine {
            enroll_speaker: toks[0].to_string(),
            test_utterance: toks[1].to_string(),
            score,
        });
    }
    Ok(out)
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<ScoreLine>> {
    let path = path.as_ref();
    parse_scores(&std::fs::read_to_string(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_trials_str;

    #[test]
    fn scores_roundtrip_exactly() {
        let trials = parse_trials_str("a x 1\nb y 0\n", Path::new("t")).unwrap();
        let scores = [0.1 + 0.2, -1.0 / 3.0];
        let text = format_scores(&trials, &scores).unwrap();
        let back = parse_scores(&text, Path::new("s")).unwrap();
        assert_eq!(back[0].score, scores[0]);
        assert_eq!(back[1].score, scores[1]);
        assert_eq!(back[1].enroll_speaker, "b");
        assert!(format_scores(&trials, &scores[..1]).is_err());
    }
}
