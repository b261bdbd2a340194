//! A small trainable embedder for desk-scale end-to-end runs.
//!
//! Frames pass through a fixed random ReLU layer, are pooled into mean and
//! standard deviation, standardized, and projected linearly to the
//! embedding. Only the projection and an AAM classifier head are trained,
//! so training stays cheap while the whole audio-to-score path is real.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::Embedder;
use crate::audio::{AudioBuffer, FeatureMatrix, Frontend, N_MELS};
use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::train::{aam_grad, lr_at, AamConfig, ClassifierHead, EpochLog, Sgd, SgdConfig, StagePlan};

/// Spec code marking a proxy-embedder checkpoint.
pub const PROXY_SPEC_CODE: u32 = u32::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyConfig {
    pub hidden: usize,
    pub emb_dim: usize,
    pub plan: StagePlan,
    pub aam: AamConfig,
    pub sgd: SgdConfig,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            emb_dim: 256,
            plan: StagePlan { epochs: 40, segment_seconds: 2.0, lr_init: 0.1, lr_final: 0.001, speed_perturb_enabled: false },
            aam: AamConfig::stage_one(0),
            sgd: SgdConfig { batch_size: 64, ..SgdConfig::default() },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProxyEmbedder {
    pub hidden: usize,
    pub emb_dim: usize,
    frame_weight: Vec<f64>,
    frame_bias: Vec<f64>,
    pool_mean: Vec<f64>,
    pool_std: Vec<f64>,
    projection: Vec<f64>,
    frontend: Frontend,
}

impl ProxyEmbedder {
    /// Untrained embedder with random frame layer and projection.
    pub fn new(hidden: usize, emb_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std_in = (2.0 / N_MELS as f64).sqrt();
        let frame_weight = (0..hidden * N_MELS).map(|_| std_in * rng.sample::<f64, _>(StandardNormal)).collect();
        let frame_bias = (0..hidden).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        let pooled = 2 * hidden;
        let std_p = (1.0 / pooled as f64).sqrt();
        let projection = (0..emb_dim * pooled).map(|_| std_p * rng.sample::<f64, _>(StandardNormal)).collect();
        Self {
            hidden,
            emb_dim,
            frame_weight,
            frame_bias,
            pool_mean: vec![0.0; pooled],
            pool_std: vec![1.0; pooled],
            projection,
            frontend: Frontend::default(),
        }
    }

    /// Mean and std of the frame-layer activations, `2 * hidden` values.
    pub fn pooled(&self, feats: &FeatureMatrix) -> Result<Vec<f64>> {
        if feats.dims != N_MELS {
            return Err(Error::DimMismatch { expected: N_MELS, actual: feats.dims });
        }
        if feats.frames == 0 {
            return Err(Error::TooFewFrames { frames: 0, min: 1 });
        }
        let h = self.hidden;
        let mut sum = vec![0.0; h];
        let mut sq = vec![0.0; h];
        for t in 0..feats.frames {
            let x = feats.row(t);
            for j in 0..h {
                let w = &self.frame_weight[j * N_MELS..(j + 1) * N_MELS];
                let a = (self.frame_bias[j] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).max(0.0);
                sum[j] += a;
                sq[j] += a * a;
            }
        }
        let n = feats.frames as f64;
        let mut out = vec![0.0; 2 * h];
        for j in 0..h {
            let m = sum[j] / n;
            out[j] = m;
            out[h + j] = ((sq[j] / n - m * m).max(0.0) + 1e-10).sqrt();
        }
        Ok(out)
    }

    fn standardize(&self, pooled: &[f64]) -> Vec<f64> {
        pooled.iter().zip(&self.pool_mean).zip(&self.pool_std).map(|((p, m), s)| (p - m) / s).collect()
    }

    fn project(&self, z: &[f64]) -> Vec<f64> {
        self.projection.chunks(z.len()).map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn embed_features(&self, feats: &FeatureMatrix) -> Result<Vec<f32>> {
        let z = self.standardize(&self.pooled(feats)?);
        Ok(self.project(&z).into_iter().map(|v| v as f32).collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let t = |name: &str, dims: Vec<usize>, v: &[f64]| Tensor::new(name, dims, v.iter().map(|&x| x as f32).collect());
        let p = 2 * self.hidden;
        Checkpoint {
            spec_code: PROXY_SPEC_CODE,
            tensors: vec![
                t("frame.weight", vec![self.hidden, N_MELS], &self.frame_weight),
                t("frame.bias", vec![self.hidden], &self.frame_bias),
                t("pool.mean", vec![p], &self.pool_mean),
                t("pool.std", vec![p], &self.pool_std),
                t("proj.weight", vec![self.emb_dim, p], &self.projection),
            ],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.spec_code != PROXY_SPEC_CODE {
            return Err(Error::InvalidSpec(format!("spec code {} is not a proxy embedder", ck.spec_code)));
        }
        let get = |name: &str, len: usize| -> Result<Vec<f64>> {
            let t = ck.get(name)?;
            if t.data.len() != len {
                return Err(Error::DimMismatch { expected: len, actual: t.data.len() });
            }
            Ok(t.data.iter().map(|&v| v as f64).collect())
        };
        let fw = ck.get("frame.weight")?;
        let hidden = *fw.dims.first().ok_or_else(|| Error::InvalidSpec("frame.weight has no dims".into()))?;
        let pw = ck.get("proj.weight")?;
        let emb_dim = *pw.dims.first().ok_or_else(|| Error::InvalidSpec("proj.weight has no dims".into()))?;
        let p = 2 * hidden;
        Ok(Self {
            hidden,
            emb_dim,
            frame_weight: get("frame.weight", hidden * N_MELS)?,
            frame_bias: get("frame.bias", hidden)?,
            pool_mean: get("pool.mean", p)?,
            pool_std: get("pool.std", p)?,
            projection: get("proj.weight", emb_dim * p)?,
            frontend: Frontend::default(),
        })
    }
}

impl Embedder for ProxyEmbedder {
    fn dim(&self) -> usize {
        self.emb_dim
    }

    fn embed(&self, audio: &AudioBuffer) -> Result<Vec<f32>> {
        self.embed_features(&self.frontend.extract(audio)?)
    }
}

#[derive(Debug, Clone)]
pub struct ProxyTraining {
    pub embedder: ProxyEmbedder,
    pub head: ClassifierHead,
    pub speakers: Vec<String>,
    pub trace: Vec<EpochLog>,
}

/// Trains the projection jointly with an AAM head over the speakers of
/// `utterances` (classes in sorted speaker-id order).
pub fn train_proxy(utterances: &[AudioBuffer], cfg: &ProxyConfig, seed: u64) -> Result<ProxyTraining> {
    let speakers: Vec<String> = utterances
        .iter()
        .map(|u| u.speaker_id.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if speakers.len() < 2 {
        return Err(Error::InvalidConfig("proxy training needs at least 2 speakers".into()));
    }
    let index: BTreeMap<&str, usize> = speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels: Vec<usize> = utterances.iter().map(|u| index[u.speaker_id.as_str()]).collect();

    let mut emb = ProxyEmbedder::new(cfg.hidden, cfg.emb_dim, seed);
    let pooled: Vec<Vec<f64>> = utterances
        .par_iter()
        .map(|u| emb.pooled(&emb.frontend.extract(u)?))
        .collect::<Result<_>>()?;
    let p = 2 * cfg.hidden;
    let n = pooled.len() as f64;
    for j in 0..p {
        let m = pooled.iter().map(|v| v[j]).sum::<f64>() / n;
        let var = pooled.iter().map(|v| (v[j] - m).powi(2)).sum::<f64>() / n;
        emb.pool_mean[j] = m;
        emb.pool_std[j] = var.sqrt().max(1e-6);
    }
    let inputs: Vec<Vec<f64>> = pooled.iter().map(|v| emb.standardize(v)).collect();

    let aam = AamConfig { num_classes: speakers.len(), ..cfg.aam };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut head = ClassifierHead::random(aam.num_classes, cfg.emb_dim, &mut rng);
    let mut head_opt = Sgd::new(cfg.sgd, head.weight.len());
    let mut proj_opt = Sgd::new(cfg.sgd, emb.projection.len());
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut trace = Vec::with_capacity(cfg.plan.epochs);

    for epoch in 0..cfg.plan.epochs {
        let lr = lr_at(epoch as f64, &cfg.plan);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.sgd.batch_size.max(1)) {
            let mut g_head = vec![0.0; head.weight.len()];
            let mut g_proj = vec![0.0; emb.projection.len()];
            for &i in chunk {
                let z = &inputs[i];
                let e = emb.project(z);
                let g = aam_grad(&e, &head, labels[i], &aam)?;
                total += g.loss;
                g_head.iter_mut().zip(&g.head).for_each(|(a, b)| *a += b);
                for (r, &ge) in g.embedding.iter().enumerate() {
                    let row = &mut g_proj[r * p..(r + 1) * p];
                    row.iter_mut().zip(z).for_each(|(a, zv)| *a += ge * zv);
                }
            }
            let inv = 1.0 / chunk.len() as f64;
            g_head.iter_mut().for_each(|g| *g *= inv);
            g_proj.iter_mut().for_each(|g| *g *= inv);
            head_opt.step(&mut head.weight, &g_head, lr);
            proj_opt.step(&mut emb.projection, &g_proj, lr);
        }
        let mean_loss = total / n;
        log::debug!("proxy epoch {epoch} lr {lr:.3e} loss {mean_loss:.5}");
        trace.push(EpochLog { epoch, lr, mean_loss });
    }
    Ok(ProxyTraining { embedder: emb, head, speakers, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_utterance, VoiceProfile};

    #[test]
    fn checkpoint_roundtrip_preserves_embeddings() {
        let e = ProxyEmbedder::new(16, 8, 3);
        let back = ProxyEmbedder::from_checkpoint(&e.to_checkpoint()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = VoiceProfile::random("a", &mut rng);
        let u = synth_utterance(&v, "u", 1.0, 16000, &mut rng);
        let a = e.embed(&u).unwrap();
        let b = back.embed(&u).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-4);
        }
        assert_eq!(a.len(), 8);
    }

    #[test]
    fn training_reduces_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut utts = Vec::new();
        for s in 0..4 {
            let v = VoiceProfile::random(format!("spk{s}"), &mut rng);
            for i in 0..6 {
                utts.push(synth_utterance(&v, &format!("spk{s}-{i}"), 1.0, 16000, &mut rng));
            }
        }
        let cfg = ProxyConfig {
            hidden: 32,
            emb_dim: 16,
            plan: StagePlan { epochs: 15, ..ProxyConfig::default().plan },
            ..ProxyConfig::default()
        };
        let t = train_proxy(&utts, &cfg, 2).unwrap();
        assert!(t.trace.last().unwrap().mean_loss < t.trace[0].mean_loss);
        assert_eq!(t.speakers.len(), 4);
    }
}
