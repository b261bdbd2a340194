use crate::error::{Error, Result};

/// Scores aligned index-for-index with a trial list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub system: String,
    /// Human-readable description of the scoring chain, e.g. `cosine+asnorm/emb-avg`.
    pub chain: String,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, system: impl Into<String>, chain: impl Into<String>) -> Self {
        Self { scores, system: system.into(), chain: chain.into() }
    }
}

/// `(s - mean) / std` over the set; a constant set maps to zeros.
pub fn z_normalize(scores: &[f64]) -> Vec<f64> {
    let n = scores.len().max(1) as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let std = (scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
    if std == 0.0 {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - mean) / std).collect()
}

/// Weights proportional to `1 / minDCF`, summing to one.
pub fn fusion_weights(min_dcfs: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = min_dcfs.iter().find(|&&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidConfig(format!("minDCF values must be positive, got {bad}")));
    }
    let inv: Vec<f64> = min_dcfs.iter().map(|d| 1.0 / d).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|w| w / total).collect())
}

/// Weighted mean of z-normalized score sets.
pub fn fuse_with_weights(sets: &[ScoreSet], weights: &[f64]) -> Result<ScoreSet> {
    let first = sets.first().ok_or_else(|| Error::Misaligned("no score sets to fuse".into()))?;
    if weights.len() != sets.len() {
        return Err(Error::Misaligned(format!("{} sets but {} weights", sets.len(), weights.len())));
    }
    let n = first.scores.len();
    if let Some(s) = sets.iter().find(|s| s.scores.len() != n) {
        return Err(Error::Misaligned(format!(
            "system {} has {} scores, expected {n}",
            s.system,
            s.scores.len()
        )));
    }
    let mut fused = vec![0.0; n];
    for (set, &w) in sets.iter().zip(weights) {
        for (f, z) in fused.iter_mut().zip(z_normalize(&set.scores)) {
            *f += w * z;
        }
    }
    let names: Vec<&str> = sets.iter().map(|s| s.system.as_str()).collect();
    Ok(ScoreSet::new(fused, "fusion", format!("znorm-weighted({})", names.join(","))))
}

/// Fuses systems with weights derived from their minDCF.
pub fn fuse_scores(sets: &[ScoreSet], min_dcfs: &[f64]) -> Result<ScoreSet> {
    if min_dcfs.len() != sets.len() {
        return Err(Error::Misaligned(format!("{} sets but {} minDCF values", sets.len(), min_dcfs.len())));
    }
    fuse_with_weights(sets, &fusion_weights(min_dcfs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranks(v: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        idx
    }

    #[test]
    fn weights_inverse_to_min_dcf() {
        let w = fusion_weights(&[0.32, 0.16]).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12 && (w[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!(fusion_weights(&[0.3, 0.0]).is_err());
    }

    #[test]
    fn single_system_is_its_z_scores() {
        let s = ScoreSet::new(vec![0.1, 0.5, -0.2, 0.9], "a", "cosine");
        let f = fuse_scores(std::slice::from_ref(&s), &[0.4]).unwrap();
        assert_eq!(f.scores, z_normalize(&s.scores));
        assert_eq!(ranks(&f.scores), ranks(&s.scores));
    }

    #[test]
    fn identical_systems_keep_ranks() {
        let s = ScoreSet::new(vec![0.3, -0.1, 0.7, 0.2], "a", "cosine");
        let f = fuse_scores(&[s.clone(), s.clone()], &[0.5, 0.1]).unwrap();
        assert_eq!(ranks(&f.scores), ranks(&s.scores));
    }

    #[test]
    fn misaligned_rejected() {
        let a = ScoreSet::new(vec![0.1, 0.2], "a", "");
        let b = ScoreSet::new(vec![0.1], "b", "");
        assert!(matches!(fuse_scores(&[a, b], &[0.3, 0.3]), Err(Error::Misaligned(_))));
    }

    proptest! {
        #[test]
        fn affine_rescaling_absorbed(
            a in proptest::collection::vec(-5f64..5.0, 8),
            b in proptest::collection::vec(-5f64..5.0, 8),
            scale in 0.01f64..100.0, shift in -50f64..50.0,
        ) {
            let sa = ScoreSet::new(a.clone(), "a", "");
            let sb = ScoreSet::new(b, "b", "");
            let scaled = ScoreSet::new(a.iter().map(|x| scale * x + shift).collect(), "a", "");
            let f1 = fuse_scores(&[sa, sb.clone()], &[0.3, 0.4]).unwrap();
            let f2 = fuse_scores(&[scaled, sb], &[0.3, 0.4]).unwrap();
            for (x, y) in f1.scores.iter().zip(&f2.scores) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
