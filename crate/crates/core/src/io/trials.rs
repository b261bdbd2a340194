use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Target,
    Nontarget,
}

impl Label {
    fn parse(tok: &str) -> Option<Self> {
        match tok {
            "target" | "1" => Some(Label::Target),
            "nontarget" | "0" => Some(Label::Nontarget),
            _ => None,
        }
    }

    pub fn is_target(self) -> bool {
        self == Label::Target
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialPair {
    pub enroll_speaker: String,
    pub test_utterance: String,
    pub label: Option<Label>,
}

/// Ordered trials plus the enrollment-speaker to utterance mapping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialSet {
    pub trials: Vec<TrialPair>,
    pub enrollment: BTreeMap<String, Vec<String>>,
}

impl TrialSet {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Target flags in trial order, if every trial is labelled.
    pub fn labels(&self) -> Option<Vec<bool>> {
        self.trials.iter().map(|t| t.label.map(Label::is_target)).collect()
    }

    pub fn with_enrollment(mut self, enrollment: BTreeMap<String, Vec<String>>) -> Self {
        self.enrollment = enrollment;
        self
    }
}

/// Parses `enroll_speaker test_utterance [label]` lines. Blank lines and
/// lines starting with `#` are skipped.
pub fn parse_trials_str(text: &str, source: &Path) -> Result<TrialSet> {
    let mut seen = HashSet::new();
    let mut trials = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { path: source.to_path_buf(), line: i + 1, msg };
        let toks: Vec<&str> = line.split_whitespace().collect();
        let label = match toks.len() {
            2 => None,
            3 => Some(Label::parse(toks[2]).ok_or_else(|| {
                err(format!("unknown label {:?}; expected target/nontarget or 1/0", toks[2]))
            })?),
            n => return Err(err(format!("expected 2 or 3 fields, found {n}"))),
        };
        if !seen.insert((toks[0], toks[1])) {
            return Err(err(format!("duplicate trial {} {}", toks[0], toks[1])));
        }
        trials.push(TrialPair {
            enroll_speaker: toks[0].to_string(),
            test_utterance: toks[1].to_string(),
            label,
        });
    }
    Ok(TrialSet { trials, enrollment: BTreeMap::new() })
}

pub fn parse_trials(path: impl AsRef<Path>) -> Result<TrialSet> {
    let path = path.as_ref();
    parse_trials_str(&std::fs::read_to_string(path)?, path)
}

/// Parses the enrollment side file: `enroll_speaker utterance_id` per line.
/// A speaker may appear on several lines; order is preserved.
pub fn parse_enrollment_str(text: &str, source: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::Parse {
                path: PathBuf::from(source),
                line: i + 1,
                msg: format!("expected 2 fields, found {}", toks.len()),
            });
        }
        map.entry(toks[0].to_string()).or_default().push(toks[1].to_string());
    }
    Ok(map)
}

pub fn parse_enrollment(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<String>>> {
    let path = path.as_ref();
    parse_enrollment_str(&std::fs::read_to_string(path)?, path)
}
