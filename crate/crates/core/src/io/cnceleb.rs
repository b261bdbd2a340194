//! Best-effort conversion of CN-Celeb style evaluation lists.
//!
//! Recognized files in `<root>/eval/lists` (or `<root>` itself):
//!
//! - `enroll.map`: `enroll_id path [path ...]`, several enrollment utterances
//!   per speaker;
//! - `enroll.lst`: `enroll_id path`, used when there is no `enroll.map`;
//! - `trials.lst`: `enroll_id test_path label`.
//!
//! Audio paths are taken relative to the directory above `lists`.
//! Utterance ids are those paths without extension, `/` replaced by `-`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{parse_trials_str, TrialSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WavEntry {
    pub utterance_id: String,
    pub path: PathBuf,
    pub speaker_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvertedLists {
    pub wavs: Vec<WavEntry>,
    pub trials: TrialSet,
}

impl ConvertedLists {
    /// `utterance_id path speaker_id` lines, as read by the embed command.
    pub fn wav_list(&self) -> String {
        let mut s = String::new();
        for w in &self.wavs {
            let _ = writeln!(s, "{} {} {}", w.utterance_id, w.path.display(), w.speaker_id);
        }
        s
    }

    pub fn enrollment_list(&self) -> String {
        let mut s = String::new();
        for (spk, ids) in &self.trials.enrollment {
            for id in ids {
                let _ = writeln!(s, "{spk} {id}");
            }
        }
        s
    }

    pub fn trial_list(&self) -> String {
        let mut s = String::new();
        for t in &self.trials.trials {
            let _ = write!(s, "{} {}", t.enroll_speaker, t.test_utterance);
            if let Some(l) = t.label {
                let _ = write!(s, " {}", if l.is_target() { "target" } else { "nontarget" });
            }
            s.push('\n');
        }
        s
    }
}

pub fn utterance_id(path: &str) -> String {
    let p = Path::new(path);
    let stem = p.with_extension("");
    stem.to_string_lossy().trim_start_matches("./").replace(['/', '\\'], "-")
}

fn speaker_of(path: &str) -> String {
    let name = Path::new(path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    match Path::new(path).parent().and_then(|p| p.file_name()) {
        // `id00800/singing-01-001.wav`
        Some(dir) if dir.to_string_lossy().starts_with("id") => dir.to_string_lossy().into_owned(),
        _ => name.split('-').next().unwrap_or(&name).to_string(),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, t)| !t.is_empty())
}

pub fn convert_cnceleb(root: impl AsRef<Path>) -> Result<ConvertedLists> {
    let root = root.as_ref();
    let lists = [root.join("eval").join("lists"), root.join("lists"), root.to_path_buf()]
        .into_iter()
        .find(|d| d.join("trials.lst").is_file())
        .ok_or_else(|| Error::InvalidConfig(format!("no trials.lst under {}", root.display())))?;
    let audio_root = lists.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut enrollment: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut wavs: BTreeMap<String, WavEntry> = BTreeMap::new();
    let add = |path: &str, speaker: String, wavs: &mut BTreeMap<String, WavEntry>| {
        let id = utterance_id(path);
        wavs.entry(id.clone())
            .or_insert_with(|| WavEntry { utterance_id: id.clone(), path: audio_root.join(path), speaker_id: speaker });
        id
    };

    let map = lists.join("enroll.map");
    let lst = lists.join("enroll.lst");
    let source = if map.is_file() { map } else { lst };
    if source.is_file() {
        let text = std::fs::read_to_string(&source)?;
        for (n, toks) in lines(&text) {
            if toks.len() < 2 {
                return Err(Error::Parse { path: source.clone(), line: n, msg: "expected enroll id and path".into() });
            }
            let spk = toks[0].to_string();
            let speaker = spk.trim_end_matches("-enroll").to_string();
            for p in &toks[1..] {
                let id = add(p, speaker.clone(), &mut wavs);
                enrollment.entry(spk.clone()).or_default().push(id);
            }
        }
    } else {
        log::warn!("no enroll.map or enroll.lst in {}; enrollment ids are used as utterance ids", lists.display());
    }

    let trials_path = lists.join("trials.lst");
    let text = std::fs::read_to_string(&trials_path)?;
    let mut rewritten = String::with_capacity(text.len());
    for (n, toks) in lines(&text) {
        if toks.len() < 2 {
            return Err(Error::Parse { path: trials_path.clone(), line: n, msg: "expected enroll id and test path".into() });
        }
        let id = add(toks[1], speaker_of(toks[1]), &mut wavs);
        let _ = writeln!(rewritten, "{} {} {}", toks[0], id, toks[2..].join(" "));
    }
    let trials = parse_trials_str(&rewritten, &trials_path)?.with_enrollment(enrollment);
    Ok(ConvertedLists { wavs: wavs.into_values().collect(), trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_enroll_map_and_trials() {
        let dir = tempfile::tempdir().unwrap();
        let lists = dir.path().join("eval").join("lists");
        std::fs::create_dir_all(&lists).unwrap();
        std::fs::write(lists.join("enroll.map"), "id00800-enroll id00800/a.wav id00800/b.wav\n").unwrap();
        std::fs::write(
            lists.join("trials.lst"),
            "id00800-enroll test/id00800-singing-01-001.wav 1\nid00800-enroll test/id00801-speech-01-002.wav 0\n",
        )
        .unwrap();
        let c = convert_cnceleb(dir.path()).unwrap();
        assert_eq!(c.trials.enrollment["id00800-enroll"], ["id00800-a", "id00800-b"]);
        assert_eq!(c.trials.trials[0].test_utterance, "test-id00800-singing-01-001");
        assert_eq!(c.trials.labels().unwrap(), [true, false]);
        let w: Vec<&str> = c.wavs.iter().map(|w| w.speaker_id.as_str()).collect();
        assert_eq!(w, ["id00800", "id00800", "id00800", "id00801"]);
        assert!(c.wavs[0].path.ends_with("eval/id00800/a.wav"));
        assert_eq!(c.enrollment_list(), "id00800-enroll id00800-a\nid00800-enroll id00800-b\n");
        assert!(c.trial_list().starts_with("id00800-enroll test-id00800-singing-01-001 target\n"));
    }

    #[test]
    fn enroll_lst_fallback() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("enroll.lst"), "id1-enroll enroll/id1-enroll.wav\n").unwrap();
        std::fs::write(dir.path().join("trials.lst"), "id1-enroll test/id1-x.wav target\n").unwrap();
        let c = convert_cnceleb(dir.path()).unwrap();
        assert_eq!(c.trials.enrollment["id1-enroll"], ["enroll-id1-enroll"]);
        assert!(convert_cnceleb(dir.path().join("nope")).is_err());
    }
}
