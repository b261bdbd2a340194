//! On-disk formats: embedding stores, trial and enrollment lists, score
//! files and key=value configuration. Every writer goes through
//! [`write_atomic`].

pub mod cnceleb;
mod config;
mod scores;
mod store;
mod trials;

pub use config::Config;
pub use scores::{format_scores, parse_scores, read_scores, write_scores, ScoreLine};
pub use store::{EmbeddingStore, StoreRecord};
pub use trials::{
    parse_enrollment, parse_enrollment_str, parse_trials, parse_trials_str, Label, TrialPair,
    TrialSet,
};

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
