//! Seeded end-to-end verification benchmark on synthetic voices.
//!
//! A proxy embedder is trained on one speaker population, which also
//! provides the AS-norm cohort. A disjoint evaluation population enrolls
//! with several clean utterances and is tested with noisy ones.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{add_noise, AudioBuffer};
use crate::error::Result;
use crate::io::{EmbeddingStore, Label, TrialPair, TrialSet};
use crate::metrics::EvalReport;
use crate::net::proxy::{train_proxy, ProxyConfig, ProxyEmbedder};
use crate::pipeline::{embed_all, embed_enrollment_concat, run_verification, VerifyOptions};
use crate::scoring::{build_cohort, Cohort, CohortSelection, ScoreAvgNorm, Strategy};
use crate::synth::{synth_noise, synth_utterance, VoiceProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub train_speakers: usize,
    pub train_utterances: usize,
    pub eval_speakers: usize,
    pub enroll_utterances: usize,
    pub test_utterances: usize,
    /// Utterance durations are drawn uniformly from this range, in seconds.
    pub seconds: (f64, f64),
    /// SNR range of the noise added to test utterances, in dB.
    pub test_snr_db: (f64, f64),
    /// Each training utterance also appears once with noise in this SNR
    /// range, in dB; `None` trains on clean audio only.
    pub train_snr_db: Option<(f64, f64)>,
    pub cohort_top_k: usize,
    pub proxy: ProxyConfig,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            train_speakers: 200,
            train_utterances: 8,
            eval_speakers: 50,
            enroll_utterances: 3,
            test_utterances: 4,
            seconds: (1.0, 2.5),
            test_snr_db: (5.0, 20.0),
            train_snr_db: Some((5.0, 20.0)),
            cohort_top_k: 50,
            proxy: ProxyConfig::default(),
            sample_rate: 16000,
            seed: 2022,
        }
    }
}

/// Everything produced before scoring: stores, cohort and trials.
pub struct Benchmark {
    pub embedder: ProxyEmbedder,
    pub cohort: Cohort,
    pub store: EmbeddingStore,
    pub concat: EmbeddingStore,
    pub trials: TrialSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub chain: String,
    pub report: EvalReport,
}

fn utterance<R: Rng>(voice: &VoiceProfile, id: String, cfg: &BenchmarkConfig, rng: &mut R) -> AudioBuffer {
    let secs = rng.random_range(cfg.seconds.0..cfg.seconds.1);
    synth_utterance(voice, &id, secs, cfg.sample_rate, rng)
}

impl Benchmark {
    pub fn build(cfg: &BenchmarkConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut train = Vec::new();
        let mut augmented = Vec::new();
        for s in 0..cfg.train_speakers {
            let voice = VoiceProfile::random(format!("train{s:04}"), &mut rng);
            for u in 0..cfg.train_utterances {
                let clean = utterance(&voice, format!("train{s:04}-{u:02}"), cfg, &mut rng);
                if let Some((lo, hi)) = cfg.train_snr_db {
                    let noise = synth_noise(clean.duration_seconds(), cfg.sample_rate, &mut rng);
                    let mut noisy = add_noise(&clean, &noise, rng.random_range(lo..hi))?;
                    noisy.utterance_id.push_str("-noisy");
                    augmented.push(noisy);
                }
                train.push(clean);
            }
        }
        let cohort_source = train.clone();
        train.extend(augmented);
        let trained = train_proxy(&train, &cfg.proxy, cfg.seed)?;
        let embedder = trained.embedder;
        let cohort = build_cohort(&embed_all(&embedder, &cohort_source)?)?;

        let mut eval = Vec::new();
        let mut enrollment: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut tests = Vec::new();
        for s in 0..cfg.eval_speakers {
            let spk = format!("eval{s:03}");
            let voice = VoiceProfile::random(spk.clone(), &mut rng);
            for u in 0..cfg.enroll_utterances {
                let a = utterance(&voice, format!("{spk}-enr{u}"), cfg, &mut rng);
                enrollment.entry(spk.clone()).or_default().push(a.utterance_id.clone());
                eval.push(a);
            }
            for u in 0..cfg.test_utterances {
                let clean = utterance(&voice, format!("{spk}-tst{u}"), cfg, &mut rng);
                let noise = synth_noise(clean.duration_seconds(), cfg.sample_rate, &mut rng);
                let snr = rng.random_range(cfg.test_snr_db.0..cfg.test_snr_db.1);
                let noisy = add_noise(&clean, &noise, snr)?;
                tests.push(noisy.utterance_id.clone());
                eval.push(noisy);
            }
        }
        let store = embed_all(&embedder, &eval)?;
        let audio: HashMap<String, AudioBuffer> = eval.into_iter().map(|a| (a.utterance_id.clone(), a)).collect();
        let concat = embed_enrollment_concat(&embedder, &enrollment, &audio)?;

        let mut trials = Vec::new();
        for spk in enrollment.keys() {
            for t in &tests {
                let label = if t.starts_with(&format!("{spk}-")) { Label::Target } else { Label::Nontarget };
                trials.push(TrialPair { enroll_speaker: spk.clone(), test_utterance: t.clone(), label: Some(label) });
            }
        }
        Ok(Self { embedder, cohort, store, concat, trials: TrialSet { trials, enrollment } })
    }

    pub fn run(&self, strategy: Strategy, asnorm: bool, top_k: usize) -> Result<ChainResult> {
        let opts = VerifyOptions {
            strategy,
            asnorm,
            selection: CohortSelection::TopK(top_k.min(self.cohort.len())),
            score_avg_norm: ScoreAvgNorm::BeforeAverage,
            p_target: 0.01,
        };
        let run = run_verification(&self.trials, &self.store, Some(&self.concat), Some(&self.cohort), &opts)?;
        Ok(ChainResult { chain: opts.chain(), report: run.report.expect("benchmark trials are labelled") })
    }

    /// Every strategy with and without AS-norm.
    pub fn run_all(&self, top_k: usize) -> Result<Vec<ChainResult>> {
        let mut out = Vec::new();
        for asnorm in [false, true] {
            for s in Strategy::ALL {
                out.push(self.run(s, asnorm, top_k)?);
            }
        }
        Ok(out)
    }
}
