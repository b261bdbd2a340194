//! Classifier-head training with the additive angular margin softmax.
//!
//! Training runs on fixed embeddings. Stage I classifies every speaker and
//! every speed-perturbed copy of it with margin 0.2; stage II keeps only the
//! unperturbed classes and finetunes with margin 0.5.

mod aam;
mod schedule;

pub use aam::{aam_batch_grad, aam_grad, aam_loss, AamConfig, AamGrad, AamOutput, ClassifierHead};
pub use schedule::{
    expand_speed_label, expanded_class_count, lr_at, sample_segment, StagePlan, SPEED_RATIOS,
};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One training embedding and its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub embedding: Vec<f64>,
    pub label: usize,
}

/// Optimizer settings shared by both stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { batch_size: 128, momentum: 0.9, weight_decay: 1e-4 }
    }
}

/// Momentum SGD with decoupled state; one instance per parameter tensor.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub config: SgdConfig,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(config: SgdConfig, params: usize) -> Self {
        Self { config, velocity: vec![0.0; params] }
    }

    /// `v = mu v + (g + wd w); w -= lr v`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        let SgdConfig { momentum, weight_decay, .. } = self.config;
        for ((w, g), v) in params.iter_mut().zip(grad).zip(&mut self.velocity) {
            *v = momentum * *v + g + weight_decay * *w;
            *w -= lr * *v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub head: ClassifierHead,
    pub trace: Vec<EpochLog>,
}

/// `epoch<TAB>lr<TAB>mean_loss`, one line per epoch.
pub fn format_trace(trace: &[EpochLog]) -> String {
    let mut out = String::new();
    for e in trace {
        let _ = writeln!(out, "{}\t{}\t{}", e.epoch, e.lr, e.mean_loss);
    }
    out
}

fn check_dataset(data: &[Example], cfg: &AamConfig, dim: usize) -> Result<()> {
    if cfg.num_classes < 2 {
        return Err(Error::InvalidConfig("training needs at least 2 classes".into()));
    }
    for ex in data {
        if ex.label >= cfg.num_classes {
            return Err(Error::ClassOutOfRange { index: ex.label, classes: cfg.num_classes });
        }
        if ex.embedding.len() != dim {
            return Err(Error::DimMismatch { expected: dim, actual: ex.embedding.len() });
        }
    }
    let mut seen = vec![false; cfg.num_classes];
    data.iter().for_each(|ex| seen[ex.label] = true);
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidConfig(format!("class {missing} has no training examples")));
    }
    Ok(())
}

/// Trains a head with mini-batch SGD. The learning rate of epoch `e`
/// (zero-based) is `lr_at(e)`. `init` continues from an existing head;
/// otherwise rows are drawn at random with norm close to one.
pub fn train_head(
    data: &[Example],
    plan: &StagePlan,
    cfg: &AamConfig,
    sgd: SgdConfig,
    init: Option<ClassifierHead>,
    seed: u64,
) -> Result<TrainOutcome> {
    plan.validate()?;
    cfg.validate()?;
    if sgd.batch_size == 0 {
        return Err(Error::InvalidConfig("batch size must be at least 1".into()));
    }
    let dim = match (&init, data.first()) {
        (Some(h), _) => h.dim,
        (None, Some(ex)) => ex.embedding.len(),
        (None, None) => return Err(Error::InvalidConfig("empty training set".into())),
    };
    check_dataset(data, cfg, dim)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = match init {
        Some(h) if h.num_classes != cfg.num_classes => {
            return Err(Error::DimMismatch { expected: cfg.num_classes, actual: h.num_classes })
        }
        Some(h) => h,
        None => ClassifierHead::random(cfg.num_classes, dim, &mut rng),
    };
    let mut opt = Sgd::new(sgd, head.weight.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(plan.epochs);

    for epoch in 0..plan.epochs {
        let lr = lr_at(epoch as f64, plan);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(sgd.batch_size) {
            let batch: Vec<(&[f64], usize)> =
                chunk.iter().map(|&i| (data[i].embedding.as_slice(), data[i].label)).collect();
            let (loss, mut grad) = aam_batch_grad(&batch, &head, cfg)?;
            let inv = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            opt.step(&mut head.weight, &grad, lr);
            total += loss;
        }
        let mean_loss = total / data.len() as f64;
        log::debug!("epoch {epoch} lr {lr:.3e} loss {mean_loss:.5}");
        trace.push(EpochLog { epoch, lr, mean_loss });
    }
    Ok(TrainOutcome { head, trace })
}

/// Result of the classification stage followed by large-margin finetuning.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageOutcome {
    pub stage_one: TrainOutcome,
    pub stage_two: TrainOutcome,
    pub stage_one_classes: usize,
    pub stage_two_classes: usize,
}

/// Stage I on `data` labelled over `3 * base_speakers` classes (see
/// [`expand_speed_label`]), then stage II on the unperturbed examples only,
/// starting from the stage-I rows of the base classes.
pub fn train_two_stage(
    data: &[Example],
    base_speakers: usize,
    plans: (&StagePlan, &StagePlan),
    sgd: SgdConfig,
    seed: u64,
) -> Result<TwoStageOutcome> {
    let (one, two) = plans;
    let classes_one = if one.speed_perturb_enabled { expanded_class_count(base_speakers) } else { base_speakers };
    let mut cfg = AamConfig::stage_one(classes_one);
    let stage_one = train_head(data, one, &cfg, sgd, None, seed)?;

    let base: Vec<Example> = data.iter().filter(|ex| ex.label < base_speakers).cloned().collect();
    cfg = AamConfig::stage_two(base_speakers);
    let init = stage_one.head.restrict_to(base_speakers)?;
    let stage_two = train_head(&base, two, &cfg, sgd, Some(init), seed.wrapping_add(1))?;
    Ok(TwoStageOutcome { stage_one, stage_two, stage_one_classes: classes_one, stage_two_classes: base_speakers })
}

/// Training examples from a store. A speaker id ending in `-sp0.9` or
/// `-sp1.1` marks a speed-perturbed copy of the base speaker before the
/// suffix; those copies get the expanded labels of [`expand_speed_label`].
/// Returns the examples, the sorted base speakers and whether any speed
/// copy was present.
pub fn labelled_examples(store: &crate::io::EmbeddingStore) -> Result<(Vec<Example>, Vec<String>, bool)> {
    let split = |spk: &str| -> (String, f64) {
        for (suffix, ratio) in [("-sp0.9", 0.9), ("-sp1.1", 1.1)] {
            if let Some(base) = spk.strip_suffix(suffix) {
                return (base.to_string(), ratio);
            }
        }
        (spk.to_string(), 1.0)
    };
    let bases: std::collections::BTreeSet<String> = store.iter().map(|r| split(&r.speaker_id).0).collect();
    let bases: Vec<String> = bases.into_iter().collect();
    let mut speed = false;
    let mut out = Vec::with_capacity(store.len());
    for r in store.iter() {
        let (base, ratio) = split(&r.speaker_id);
        speed |= ratio != 1.0;
        let idx = bases.binary_search(&base).expect("collected above");
        out.push(Example {
            embedding: r.vector.iter().map(|&v| v as f64).collect(),
            label: expand_speed_label(idx, ratio, bases.len())?,
        });
    }
    Ok((out, bases, speed))
}

/// Fraction of examples whose nearest head row is their label.
pub fn accuracy(head: &ClassifierHead, data: &[Example]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data.iter().filter(|ex| head.classify(&ex.embedding) == ex.label).count();
    hits as f64 / data.len() as f64
}
