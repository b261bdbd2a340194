//! Trial scoring: cosine similarity, adaptive score normalization against a
//! speaker-mean imposter cohort, enrollment combination and fusion.

mod enroll;
mod fusion;

pub use enroll::{combine_enrollment, embed_concatenated, EnrollmentMaterials, ScoreAvgNorm, Strategy};
pub use fusion::{fuse_scores, fuse_with_weights, fusion_weights, z_normalize, ScoreSet};

use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::io::EmbeddingStore;

fn norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// `a . b / (|a| |b|)`, accumulated in f64.
pub fn cosine_score(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch { expected: a.len(), actual: b.len() });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub(crate) fn unit(v: &[f32]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|&x| x as f64 / n).collect())
}

/// Arithmetic mean of equally sized vectors.
pub fn mean_vector(vs: &[&[f32]]) -> Result<Vec<f32>> {
    let first = vs.first().ok_or(Error::EmptyEnrollment)?;
    let mut acc = vec![0f64; first.len()];
    for v in vs {
        if v.len() != acc.len() {
            return Err(Error::DimMismatch { expected: acc.len(), actual: v.len() });
        }
        for (a, &x) in acc.iter_mut().zip(v.iter()) {
            *a += x as f64;
        }
    }
    Ok(acc.into_iter().map(|a| (a / vs.len() as f64) as f32).collect())
}

/// Imposter cohort: one mean embedding per training speaker.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub speaker_ids: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
    /// Speakers dropped because their mean embedding was zero.
    pub excluded: Vec<String>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Cohort as a store keyed by speaker id.
    pub fn to_store(&self) -> Result<EmbeddingStore> {
        let dim = self.vectors.first().map_or(0, Vec::len);
        let mut store = EmbeddingStore::new(dim);
        for (id, v) in self.speaker_ids.iter().zip(&self.vectors) {
            store.insert(id.clone(), id.clone(), v.clone())?;
        }
        Ok(store)
    }

    /// Reads a cohort previously written with [`Cohort::to_store`].
    pub fn from_store(store: &EmbeddingStore) -> Self {
        Self {
            speaker_ids: store.iter().map(|r| r.speaker_id.clone()).collect(),
            vectors: store.iter().map(|r| r.vector.clone()).collect(),
            excluded: Vec::new(),
        }
    }
}

/// Averages each training speaker's embeddings. Speakers whose mean is the
/// zero vector are excluded with a warning.
pub fn build_cohort(train: &EmbeddingStore) -> Result<Cohort> {
    if train.is_empty() {
        return Err(Error::Cohort("training store is empty".into()));
    }
    let mut cohort = Cohort { speaker_ids: Vec::new(), vectors: Vec::new(), excluded: Vec::new() };
    for (spk, recs) in train.by_speaker() {
        let vs: Vec<&[f32]> = recs.iter().map(|r| r.vector.as_slice()).collect();
        let mean = mean_vector(&vs)?;
        if norm(&mean) == 0.0 {
            warn!("cohort speaker {spk} has a zero mean embedding; excluded");
            cohort.excluded.push(spk.to_string());
            continue;
        }
        cohort.speaker_ids.push(spk.to_string());
        cohort.vectors.push(mean);
    }
    if cohort.is_empty() {
        return Err(Error::Cohort("every speaker was degenerate".into()));
    }
    Ok(cohort)
}

/// How the cohort scores of one side are selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CohortSelection {
    /// The `k` highest cohort scores for this embedding (adaptive).
    TopK(usize),
    /// The first `k` cohort speakers, identical for every embedding.
    Fixed(usize),
}

impl CohortSelection {
    pub fn size(self) -> usize {
        match self {
            CohortSelection::TopK(k) | CohortSelection::Fixed(k) => k,
        }
    }
}

impl Default for CohortSelection {
    fn default() -> Self {
        CohortSelection::TopK(600)
    }
}

impl FromStr for CohortSelection {
    type Err = Error;

    /// `topk:600` or `fixed:600`.
    fn from_str(s: &str) -> Result<Self> {
        let (mode, k) = s.split_once(':').unwrap_or(("topk", s));
        let k: usize = k.parse().map_err(|_| Error::InvalidConfig(format!("bad cohort size {k:?}")))?;
        match mode {
            "topk" => Ok(CohortSelection::TopK(k)),
            "fixed" => Ok(CohortSelection::Fixed(k)),
            other => Err(Error::InvalidConfig(format!("unknown cohort mode {other:?}"))),
        }
    }
}

/// Mean and population standard deviation of the selected cohort scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideStats {
    pub mean: f64,
    pub std: f64,
}

impl SideStats {
    pub fn from_scores(scores: &[f64]) -> Self {
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Selects cohort scores and returns their statistics.
pub fn select_stats(cohort_scores: &[f64], selection: CohortSelection) -> Result<SideStats> {
    let k = selection.size();
    if k < 2 {
        return Err(Error::Cohort(format!("cohort size {k} must be at least 2")));
    }
    if k > cohort_scores.len() {
        return Err(Error::Cohort(format!(
            "requested {k} cohort scores but the cohort has {}",
            cohort_scores.len()
        )));
    }
    match selection {
        CohortSelection::Fixed(_) => Ok(SideStats::from_scores(&cohort_scores[..k])),
        CohortSelection::TopK(_) => {
            let mut sorted = cohort_scores.to_vec();
            sorted.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
            Ok(SideStats::from_scores(&sorted[..k]))
        }
    }
}

/// `0.5 * ((raw - mu_e) / sd_e + (raw - mu_t) / sd_t)`.
pub fn asnorm_from_stats(raw: f64, enroll: SideStats, test: SideStats) -> Result<f64> {
    if enroll.std == 0.0 {
        return Err(Error::DegenerateCohortStats { side: "enroll" });
    }
    if test.std == 0.0 {
        return Err(Error::DegenerateCohortStats { side: "test" });
    }
    Ok(0.5 * ((raw - enroll.mean) / enroll.std + (raw - test.mean) / test.std))
}

/// AS-norm from the full lists of cohort scores of each side.
pub fn asnorm_from_scores(
    raw: f64,
    enroll_cohort: &[f64],
    test_cohort: &[f64],
    selection: CohortSelection,
) -> Result<f64> {
    asnorm_from_stats(raw, select_stats(enroll_cohort, selection)?, select_stats(test_cohort, selection)?)
}

/// Adaptive score normalization against a fixed cohort.
#[derive(Debug, Clone)]
pub struct AsNorm {
    unit_cohort: Vec<Vec<f64>>,
    pub selection: CohortSelection,
}

impl AsNorm {
    pub fn new(cohort: &Cohort, selection: CohortSelection) -> Result<Self> {
        let k = selection.size();
        if k < 2 || k > cohort.len() {
            return Err(Error::Cohort(format!(
                "cohort size {k} must be between 2 and the cohort's {} speakers",
                cohort.len()
            )));
        }
        let unit_cohort = cohort.vectors.iter().map(|v| unit(v)).collect::<Result<Vec<_>>>()?;
        Ok(Self { unit_cohort, selection })
    }

    /// Cosine scores of `emb` against every cohort speaker, in cohort order.
    pub fn cohort_scores(&self, emb: &[f32]) -> Result<Vec<f64>> {
        let u = unit(emb)?;
        if let Some(first) = self.unit_cohort.first() {
            if first.len() != u.len() {
                return Err(Error::DimMismatch { expected: first.len(), actual: u.len() });
            }
        }
        Ok(self
            .unit_cohort
            .iter()
            .map(|c| c.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0))
            .collect())
    }

    pub fn stats(&self, emb: &[f32]) -> Result<SideStats> {
        select_stats(&self.cohort_scores(emb)?, self.selection)
    }

    pub fn normalize(&self, raw: f64, enroll: &[f32], test: &[f32]) -> Result<f64> {
        asnorm_from_stats(raw, self.stats(enroll)?, self.stats(test)?)
    }
}

/// AS-norm of `raw` for one enroll/test pair against `cohort`.
pub fn asnorm(raw: f64, enroll: &[f32], test: &[f32], cohort: &Cohort, top_k: usize) -> Result<f64> {
    AsNorm::new(cohort, CohortSelection::TopK(top_k))?.normalize(raw, enroll, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        assert!((cosine_score(&[0.3, -2.0, 1.0], &[0.3, -2.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 4.0]).unwrap(), 0.0);
        let s = cosine_score(&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(cosine_score(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn cohort_means_and_degenerate_exclusion() {
        let mut store = EmbeddingStore::new(2);
        store.insert("a1", "A", vec![1.0, 2.0]).unwrap();
        store.insert("b1", "B", vec![1.0, -1.0]).unwrap();
        store.insert("b2", "B", vec![-1.0, 1.0]).unwrap();
        store.insert("c1", "C", vec![2.0, 0.0]).unwrap();
        store.insert("c2", "C", vec![0.0, 2.0]).unwrap();
        let c = build_cohort(&store).unwrap();
        assert_eq!(c.speaker_ids, vec!["A", "C"]);
        assert_eq!(c.vectors, vec![vec![1.0, 2.0], vec![1.0, 1.0]]);
        assert_eq!(c.excluded, vec!["B"]);
        assert!(build_cohort(&EmbeddingStore::new(2)).is_err());
    }

    #[test]
    fn asnorm_hand_arithmetic() {
        let e = SideStats { mean: 1.0, std: 1.0 };
        let t = SideStats { mean: 0.0, std: 2.0 };
        assert_eq!(asnorm_from_stats(2.0, e, t).unwrap(), 1.0);
        let same = SideStats { mean: 0.25, std: 1.0 };
        assert_eq!(asnorm_from_stats(0.75, same, same).unwrap(), 0.5);
    }

    #[test]
    fn asnorm_from_cohort_scores_matches_stats() {
        // Enroll side top-2 of {0, 2, 0.5} is {2, 0.5}: mean 1.25, std 0.75.
        let v = asnorm_from_scores(2.0, &[0.0, 2.0, 0.5], &[1.0, -1.0, -3.0], CohortSelection::TopK(2))
            .unwrap();
        let expected = 0.5 * ((2.0 - 1.25) / 0.75 + (2.0 - 0.0) / 1.0);
        assert!((v - expected).abs() < 1e-12);
        let fixed = asnorm_from_scores(2.0, &[0.0, 2.0, 0.5], &[1.0, -1.0, -3.0], CohortSelection::Fixed(2))
            .unwrap();
        assert!((fixed - 0.5 * ((2.0 - 1.0) / 1.0 + (2.0 - 0.0) / 1.0)).abs() < 1e-12);
    }

    #[test]
    fn asnorm_errors() {
        assert!(matches!(
            asnorm_from_scores(1.0, &[0.5, 0.5], &[0.1, 0.2], CohortSelection::TopK(2)),
            Err(Error::DegenerateCohortStats { side: "enroll" })
        ));
        assert!(matches!(
            asnorm_from_scores(1.0, &[0.1, 0.2], &[0.5, 0.5], CohortSelection::TopK(2)),
            Err(Error::DegenerateCohortStats { side: "test" })
        ));
        assert!(asnorm_from_scores(1.0, &[0.1, 0.2], &[0.3, 0.5], CohortSelection::TopK(3)).is_err());
        let cohort = Cohort {
            speaker_ids: vec!["a".into(), "b".into()],
            vectors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            excluded: vec![],
        };
        assert!(asnorm(0.5, &[1.0, 1.0], &[1.0, 0.5], &cohort, 600).is_err());
    }

    #[test]
    fn selection_parsing() {
        assert_eq!("topk:600".parse::<CohortSelection>().unwrap(), CohortSelection::TopK(600));
        assert_eq!("fixed:50".parse::<CohortSelection>().unwrap(), CohortSelection::Fixed(50));
        assert_eq!("300".parse::<CohortSelection>().unwrap(), CohortSelection::TopK(300));
        assert!("best:3".parse::<CohortSelection>().is_err());
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_bounded(
            a in proptest::collection::vec(-10f32..10.0, 6),
            b in proptest::collection::vec(-10f32..10.0, 6),
        ) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let ab = cosine_score(&a, &b).unwrap();
            let ba = cosine_score(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn asnorm_increasing_in_raw(
            e in proptest::collection::vec(-1f64..1.0, 5),
            t in proptest::collection::vec(-1f64..1.0, 5),
            r1 in -1f64..1.0, r2 in -1f64..1.0,
        ) {
            prop_assume!(r1 < r2);
            let sel = CohortSelection::TopK(3);
            match (asnorm_from_scores(r1, &e, &t, sel), asnorm_from_scores(r2, &e, &t, sel)) {
                (Ok(a), Ok(b)) => prop_assert!(a < b),
                _ => {}
            }
        }
    }
}
