use std::collections::HashSet;

use crate::error::{Error, Result};

/// Retrieval lists are scored over their top ten entries.
pub const RETRIEVAL_CUTOFF: usize = 10;

/// Average precision of one ranked list truncated at `cutoff`:
/// `(1 / min(R, cutoff)) * sum of precision@k over hit ranks k`.
pub fn average_precision_at<S: AsRef<str>>(
    ranking: &[S],
    relevant: &HashSet<String>,
    cutoff: usize,
) -> f64 {
    let denom = relevant.len().min(cutoff);
    if denom == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, id) in ranking.iter().take(cutoff).enumerate() {
        if relevant.contains(id.as_ref()) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / denom as f64
}

/// Mean of per-query average precision at [`RETRIEVAL_CUTOFF`].
pub fn mean_average_precision<S: AsRef<str>>(
    rankings: &[Vec<S>],
    relevant: &[HashSet<String>],
) -> Result<f64> {
    if rankings.len() != relevant.len() {
        return Err(Error::Misaligned(format!(
            "{} rankings but {} relevance sets",
            rankings.len(),
            relevant.len()
        )));
    }
    if rankings.is_empty() {
        return Err(Error::EmptyRanking(0));
    }
    let mut total = 0.0;
    for (q, (ranking, rel)) in rankings.iter().zip(relevant).enumerate() {
        if ranking.is_empty() {
            return Err(Error::EmptyRanking(q));
        }
        if rel.is_empty() {
            return Err(Error::InvalidConfig(format!("query {q} has no relevant items")));
        }
        total += average_precision_at(ranking, rel, RETRIEVAL_CUTOFF);
    }
    Ok(total / rankings.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> HashSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_and_empty_rankings() {
        let rankings = vec![vec!["a", "b", "x"], vec!["c", "y"]];
        let rel = vec![set(&["a", "b"]), set(&["c"])];
        assert_eq!(mean_average_precision(&rankings, &rel).unwrap(), 1.0);
        let misses = vec![vec!["x", "y"], vec!["z"]];
        assert_eq!(mean_average_precision(&misses, &rel).unwrap(), 0.0);
    }

    #[test]
    fn single_hit_at_rank_two() {
        assert_eq!(average_precision_at(&["x", "a"], &set(&["a"]), 10), 0.5);
    }

    #[test]
    fn denominator_caps_at_cutoff() {
        let rel: HashSet<String> = (0..20).map(|i| i.to_string()).collect();
        let ranking: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        assert_eq!(average_precision_at(&ranking, &rel, 10), 1.0);
    }

    #[test]
    fn hits_beyond_cutoff_ignored() {
        let mut ranking: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
        ranking.push("a".into());
        assert_eq!(average_precision_at(&ranking, &set(&["a"]), 10), 0.0);
    }

    #[test]
    fn empty_ranking_is_error() {
        let r: Vec<Vec<&str>> = vec![vec![]];
        assert!(matches!(mean_average_precision(&r, &[set(&["a"])]), Err(Error::EmptyRanking(0))));
    }
}
