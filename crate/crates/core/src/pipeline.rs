//! End-to-end runs: embedding extraction into stores, trial-list
//! verification with evaluation, and top-k retrieval from a pool.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};

use rayon::prelude::*;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::io::{Config, EmbeddingStore, TrialSet};
use crate::metrics::{DcfParams, EvalReport};
use crate::net::Embedder;
use crate::scoring::{
    asnorm_from_stats, cosine_score, embed_concatenated, mean_vector, AsNorm, Cohort, CohortSelection,
    ScoreAvgNorm, ScoreSet, SideStats, Strategy,
};

/// Embeds every utterance (in parallel) into a store, keeping input order.
pub fn embed_all(embedder: &dyn Embedder, utterances: &[AudioBuffer]) -> Result<EmbeddingStore> {
    let vectors: Vec<Vec<f32>> = utterances.par_iter().map(|u| embedder.embed(u)).collect::<Result<_>>()?;
    let mut store = EmbeddingStore::new(embedder.dim());
    for (u, v) in utterances.iter().zip(vectors) {
        store.insert(u.utterance_id.clone(), u.speaker_id.clone(), v)?;
    }
    Ok(store)
}

/// One embedding per enrollment speaker of its concatenated enrollment
/// audio, keyed by the speaker id.
pub fn embed_enrollment_concat(
    embedder: &dyn Embedder,
    enrollment: &BTreeMap<String, Vec<String>>,
    audio: &HashMap<String, AudioBuffer>,
) -> Result<EmbeddingStore> {
    let missing: BTreeSet<&String> = enrollment.values().flatten().filter(|id| !audio.contains_key(*id)).collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing.into_iter().cloned().collect()));
    }
    let speakers: Vec<(&String, &Vec<String>)> = enrollment.iter().collect();
    let vectors: Vec<Vec<f32>> = speakers
        .par_iter()
        .map(|(_, ids)| {
            let parts: Vec<AudioBuffer> = ids.iter().map(|id| audio[id].clone()).collect();
            embed_concatenated(&parts, embedder)
        })
        .collect::<Result<_>>()?;
    let mut store = EmbeddingStore::new(embedder.dim());
    for ((spk, _), v) in speakers.into_iter().zip(vectors) {
        store.insert(spk.clone(), spk.clone(), v)?;
    }
    Ok(store)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub strategy: Strategy,
    pub asnorm: bool,
    pub selection: CohortSelection,
    pub score_avg_norm: ScoreAvgNorm,
    pub p_target: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        (&Config::default()).into()
    }
}

impl From<&Config> for VerifyOptions {
    fn from(c: &Config) -> Self {
        Self {
            strategy: c.strategy,
            asnorm: c.asnorm,
            selection: c.selection(),
            score_avg_norm: c.score_avg_norm,
            p_target: c.p_target,
        }
    }
}

impl VerifyOptions {
    pub fn chain(&self) -> String {
        format!("cosine{}/{}", if self.asnorm { "+asnorm" } else { "" }, self.strategy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationRun {
    pub scores: ScoreSet,
    /// Present when every trial carries a label.
    pub report: Option<EvalReport>,
}

struct Side {
    vector: Vec<f32>,
    stats: Option<SideStats>,
}

struct Enrollment {
    /// Concatenation or mean embedding, depending on the strategy.
    combined: Side,
    utterances: Vec<Side>,
}

fn side(vector: Vec<f32>, norm: Option<&AsNorm>) -> Result<Side> {
    let stats = norm.map(|n| n.stats(&vector)).transpose()?;
    Ok(Side { vector, stats })
}

fn normalized(raw: f64, e: &Side, t: &Side) -> Result<f64> {
    match (e.stats, t.stats) {
        (Some(es), Some(ts)) => asnorm_from_stats(raw, es, ts),
        _ => Ok(raw),
    }
}

/// Enrollment utterance ids of a speaker; a speaker absent from the
/// enrollment map is looked up as a single utterance id.
fn enroll_ids<'a>(trials: &'a TrialSet, speaker: &'a str) -> Vec<&'a str> {
    match trials.enrollment.get(speaker) {
        Some(ids) => ids.iter().map(String::as_str).collect(),
        None => vec![speaker],
    }
}

/// Scores a trial list and, when labels are present, evaluates it.
///
/// `concat` holds embeddings of concatenated enrollment audio keyed by
/// enrollment speaker and is only consulted by [`Strategy::UttConcat`].
/// AS-norm statistics are computed once per distinct embedding.
pub fn run_verification(
    trials: &TrialSet,
    store: &EmbeddingStore,
    concat: Option<&EmbeddingStore>,
    cohort: Option<&Cohort>,
    opts: &VerifyOptions,
) -> Result<VerificationRun> {
    let speakers: BTreeSet<&str> = trials.trials.iter().map(|t| t.enroll_speaker.as_str()).collect();
    let tests: BTreeSet<&str> = trials.trials.iter().map(|t| t.test_utterance.as_str()).collect();

    let mut missing: BTreeSet<String> = BTreeSet::new();
    for &spk in &speakers {
        let ids = enroll_ids(trials, spk);
        let concat_hit = concat.is_some_and(|c| c.get(spk).is_some());
        let needs_utts = !(opts.strategy == Strategy::UttConcat && concat_hit);
        if needs_utts {
            missing.extend(ids.iter().filter(|id| store.get(id).is_none()).map(|id| id.to_string()));
        }
        if opts.strategy == Strategy::UttConcat && !concat_hit && ids.len() > 1 {
            missing.insert(format!("{spk} (concatenated enrollment)"));
        }
    }
    missing.extend(tests.iter().filter(|id| store.get(id).is_none()).map(|id| id.to_string()));
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing.into_iter().collect()));
    }

    let norm = if opts.asnorm {
        let cohort = cohort.ok_or_else(|| Error::Cohort("AS-norm is enabled but no cohort was given".into()))?;
        Some(AsNorm::new(cohort, opts.selection)?)
    } else {
        None
    };
    let norm = norm.as_ref();

    let test_sides: HashMap<&str, Side> = tests
        .par_iter()
        .map(|&id| Ok((id, side(store.vector(id).expect("resolved").to_vec(), norm)?)))
        .collect::<Result<_>>()?;

    let enrollments: HashMap<&str, Enrollment> = speakers
        .par_iter()
        .map(|&spk| {
            let ids = enroll_ids(trials, spk);
            let vectors = |ids: &[&str]| -> Vec<&[f32]> { ids.iter().map(|id| store.vector(id).expect("resolved")).collect() };
            let e = match opts.strategy {
                Strategy::UttConcat => {
                    let v = match concat.and_then(|c| c.vector(spk)) {
                        Some(v) => v.to_vec(),
                        None => vectors(&ids)[0].to_vec(),
                    };
                    Enrollment { combined: side(v, norm)?, utterances: Vec::new() }
                }
                Strategy::EmbAvg => {
                    Enrollment { combined: side(mean_vector(&vectors(&ids))?, norm)?, utterances: Vec::new() }
                }
                Strategy::ScoreAvg => {
                    let vs = vectors(&ids);
                    let per_utt = opts.score_avg_norm == ScoreAvgNorm::BeforeAverage;
                    let utterances = vs
                        .iter()
                        .map(|v| side(v.to_vec(), if per_utt { norm } else { None }))
                        .collect::<Result<Vec<_>>>()?;
                    let combined = side(mean_vector(&vs)?, if per_utt { None } else { norm })?;
                    Enrollment { combined, utterances }
                }
            };
            Ok((spk, e))
        })
        .collect::<Result<_>>()?;

    let scores: Vec<f64> = trials
        .trials
        .par_iter()
        .map(|t| {
            let e = &enrollments[t.enroll_speaker.as_str()];
            let ts = &test_sides[t.test_utterance.as_str()];
            match opts.strategy {
                Strategy::UttConcat | Strategy::EmbAvg => normalized(cosine_score(&e.combined.vector, &ts.vector)?, &e.combined, ts),
                Strategy::ScoreAvg => {
                    let n = e.utterances.len() as f64;
                    match opts.score_avg_norm {
                        ScoreAvgNorm::BeforeAverage => {
                            let mut sum = 0.0;
                            for u in &e.utterances {
                                sum += normalized(cosine_score(&u.vector, &ts.vector)?, u, ts)?;
                            }
                            Ok(sum / n)
                        }
                        ScoreAvgNorm::AfterAverage => {
                            let mut sum = 0.0;
                            for u in &e.utterances {
                                sum += cosine_score(&u.vector, &ts.vector)?;
                            }
                            normalized(sum / n, &e.combined, ts)
                        }
                    }
                }
            }
        })
        .collect::<Result<_>>()?;

    let report = match trials.labels() {
        Some(labels) => {
            let params = DcfParams { p_target: opts.p_target, ..DcfParams::default() };
            Some(EvalReport::compute(&scores, &labels, &params)?)
        }
        None => None,
    };
    Ok(VerificationRun { scores: ScoreSet::new(scores, "", opts.chain()), report })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedHit {
    pub utterance_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Retrieval {
    /// Best-first hits per query.
    pub lists: Vec<Vec<RankedHit>>,
    /// Set when `k` exceeded the pool size and every pool item was returned.
    pub clamped: bool,
}

/// Heap entry ordered so that the worst candidate is the maximum:
/// lower score first, then larger utterance id.
struct Candidate<'a> {
    score: f64,
    id: &'a str,
}

impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.score.total_cmp(&self.score).then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

/// The `k` best pool items for each query, scored with cosine and optional
/// AS-norm, ties broken by utterance id ascending.
pub fn retrieve_topk(
    queries: &[&[f32]],
    pool: &EmbeddingStore,
    k: usize,
    norm: Option<&AsNorm>,
) -> Result<Retrieval> {
    if pool.is_empty() {
        return Err(Error::InvalidConfig("retrieval pool is empty".into()));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let clamped = k > pool.len();
    if clamped {
        log::warn!("k = {k} exceeds the pool of {}; returning the full ranking", pool.len());
    }
    let k = k.min(pool.len());
    let pool_stats: Option<Vec<SideStats>> = norm
        .map(|n| pool.records().par_iter().map(|r| n.stats(&r.vector)).collect::<Result<_>>())
        .transpose()?;

    let lists = queries
        .par_iter()
        .map(|q| {
            let q_stats = norm.map(|n| n.stats(q)).transpose()?;
            let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
            for (i, r) in pool.records().iter().enumerate() {
                let raw = cosine_score(q, &r.vector)?;
                let score = match (q_stats, &pool_stats) {
                    (Some(qs), Some(ps)) => asnorm_from_stats(raw, qs, ps[i])?,
                    _ => raw,
                };
                let c = Candidate { score, id: &r.utterance_id };
                if heap.len() < k {
                    heap.push(c);
                } else if heap.peek().is_some_and(|worst| c < *worst) {
                    heap.pop();
                    heap.push(c);
                }
            }
            Ok(heap
                .into_sorted_vec()
                .into_iter()
                .map(|c| RankedHit { utterance_id: c.id.to_string(), score: c.score })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Retrieval { lists, clamped })
}

/// Pool utterance ids spoken by `speaker`.
pub fn relevant_ids(pool: &EmbeddingStore, speaker: &str) -> HashSet<String> {
    pool.iter().filter(|r| r.speaker_id == speaker).map(|r| r.utterance_id.clone()).collect()
}
