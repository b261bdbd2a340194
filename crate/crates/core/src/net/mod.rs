//! ResNet speaker embedders: the r-vector ResNet34 and the bottleneck
//! ResNet152/221/293 family, followed by statistics pooling and a linear
//! 256-dim embedding layer.
//!
//! Only the inference path is implemented. Batch normalization runs in
//! inference mode; an untrained network uses its initial running statistics.

mod layers;
mod pooling;
pub mod proxy;

pub use layers::{BatchNorm, Conv2d, ConvBn, FeatureMap, Linear, ResidualBlock};
pub use pooling::stats_pool;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::{AudioBuffer, FeatureMatrix, Frontend};
use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};

pub const EMBEDDING_DIM: usize = 256;

/// Minimum number of input frames: three stride-2 stages need `T // 8 >= 1`.
pub const MIN_FRAMES: usize = 8;

/// Spec code used in checkpoints for depth configurations without a preset name.
pub const CUSTOM_SPEC_CODE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Two 3x3 convolutions.
    Basic,
    /// 1x1 reduce, 3x3, 1x1 expand by four.
    Bottleneck,
}

impl BlockKind {
    pub fn expansion(self) -> usize {
        match self {
            BlockKind::Basic => 1,
            BlockKind::Bottleneck => 4,
        }
    }
}

/// Architecture description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetSpec {
    pub block_kind: BlockKind,
    pub depths: [usize; 4],
    pub base_width: usize,
    pub emb_dim: usize,
    pub input_mels: usize,
}

impl NetSpec {
    pub const fn new(block_kind: BlockKind, depths: [usize; 4]) -> Self {
        Self { block_kind, depths, base_width: 32, emb_dim: EMBEDDING_DIM, input_mels: 80 }
    }

    pub const fn resnet34() -> Self {
        Self::new(BlockKind::Basic, [3, 4, 6, 3])
    }

    pub const fn resnet152() -> Self {
        Self::new(BlockKind::Bottleneck, [3, 8, 36, 3])
    }

    pub const fn resnet221() -> Self {
        Self::new(BlockKind::Bottleneck, [6, 16, 48, 3])
    }

    pub const fn resnet293() -> Self {
        Self::new(BlockKind::Bottleneck, [10, 20, 64, 3])
    }

    /// Preset by its layer count: 34, 152, 221 or 293.
    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            34 => Ok(Self::resnet34()),
            152 => Ok(Self::resnet152()),
            221 => Ok(Self::resnet221()),
            293 => Ok(Self::resnet293()),
            other => Err(Error::InvalidSpec(format!(
                "unknown preset {other}; expected one of 34, 152, 221, 293"
            ))),
        }
    }

    pub fn code(&self) -> Option<u32> {
        [34, 152, 221, 293]
            .into_iter()
            .find(|&c| Self::from_code(c).ok().as_ref() == Some(self))
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.iter().any(|&d| d == 0) {
            return Err(Error::InvalidSpec(format!("depths {:?} must all be >= 1", self.depths)));
        }
        if self.base_width == 0 || self.emb_dim == 0 {
            return Err(Error::InvalidSpec("widths must be positive".into()));
        }
        if self.input_mels < 8 {
            return Err(Error::InvalidSpec("need at least 8 mel bins".into()));
        }
        Ok(())
    }

    /// Inner width of each stage: 32, 64, 128, 256 by default.
    pub fn stage_widths(&self) -> [usize; 4] {
        [1, 2, 4, 8].map(|m| m * self.base_width)
    }

    /// Output channels of each stage after expansion.
    pub fn stage_channels(&self) -> [usize; 4] {
        self.stage_widths().map(|w| w * self.block_kind.expansion())
    }

    /// Frequency bins left after the three stride-2 stages.
    pub fn final_freq(&self) -> usize {
        self.input_mels / 8
    }

    /// Length of the flattened statistics-pooling vector.
    pub fn pooled_dim(&self) -> usize {
        2 * self.final_freq() * self.stage_channels()[3]
    }

    /// Expected `(freq, time, channels)` of each stage for `frames` input frames.
    pub fn expected_stage_shapes(&self, frames: usize) -> [(usize, usize, usize); 4] {
        let ch = self.stage_channels();
        let mut f = self.input_mels;
        let mut t = frames;
        let mut out = [(0, 0, 0); 4];
        for (s, slot) in out.iter_mut().enumerate() {
            if s > 0 {
                f /= 2;
                t /= 2;
            }
            *slot = (f, t, ch[s]);
        }
        out
    }
}

/// Learnable parameter totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    /// Stem, residual stages and their batch-norm affine parameters.
    pub backbone: usize,
    /// Pooled-statistics to embedding projection, weight and bias.
    pub embedding_layer: usize,
}

impl ParamCount {
    pub fn total(&self) -> usize {
        self.backbone + self.embedding_layer
    }
}

/// Output shapes observed during a forward pass, `(freq, time, channels)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardTrace {
    pub stem: (usize, usize, usize),
    pub stages: [(usize, usize, usize); 4],
    pub pooled_len: usize,
    pub embedding_len: usize,
}

/// A labelled utterance embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f32>,
    pub utterance_id: String,
    pub speaker_id: String,
}

/// Anything that maps an utterance to a fixed-size vector.
pub trait Embedder: Sync {
    fn dim(&self) -> usize;
    fn embed(&self, audio: &AudioBuffer) -> Result<Vec<f32>>;
}

#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetSpec,
    pub stem: ConvBn,
    pub stages: Vec<Vec<ResidualBlock>>,
    pub embedding: Linear,
    pub frontend: Frontend,
}

impl Network {
    /// Builds a network with deterministic weights drawn from `seed`.
    ///
    /// Convolutions use He (fan-in) normal initialization and every batch
    /// norm starts as the identity, except the last batch norm of each
    /// residual branch whose scale is `1 / sqrt(total blocks)` so that
    /// activations stay bounded through a few hundred layers.
    pub fn build(spec: NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = spec.stage_widths();
        let total_blocks: usize = spec.depths.iter().sum();
        let branch_scale = (1.0 / (total_blocks as f64).sqrt()) as f32;

        let stem = ConvBn {
            conv: Conv2d::he_init(1, spec.base_width, 3, 1, &mut rng),
            bn: BatchNorm::identity(spec.base_width),
        };
        let mut in_ch = spec.base_width;
        let mut stages = Vec::with_capacity(4);
        for (s, (&width, &depth)) in widths.iter().zip(&spec.depths).enumerate() {
            let mut blocks = Vec::with_capacity(depth);
            for b in 0..depth {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                let out_ch = width * spec.block_kind.expansion();
                let mut conv_bn = |i, o, k, st, scale: f32| ConvBn {
                    conv: Conv2d::he_init(i, o, k, st, &mut rng),
                    bn: BatchNorm::with_scale(o, scale),
                };
                let branch = match spec.block_kind {
                    BlockKind::Basic => vec![
                        conv_bn(in_ch, width, 3, stride, 1.0),
                        conv_bn(width, width, 3, 1, branch_scale),
                    ],
                    BlockKind::Bottleneck => vec![
                        conv_bn(in_ch, width, 1, 1, 1.0),
                        conv_bn(width, width, 3, stride, 1.0),
                        conv_bn(width, out_ch, 1, 1, branch_scale),
                    ],
                };
                let shortcut =
                    (stride != 1 || in_ch != out_ch).then(|| conv_bn(in_ch, out_ch, 1, stride, 1.0));
                blocks.push(ResidualBlock { branch, shortcut });
                in_ch = out_ch;
            }
            stages.push(blocks);
        }
        let embedding = Linear::init(spec.pooled_dim(), spec.emb_dim, &mut rng);
        Ok(Self { spec, stem, stages, embedding, frontend: Frontend::default() })
    }

    pub fn param_count(&self) -> ParamCount {
        let backbone = self.stem.param_count()
            + self.stages.iter().flatten().map(ResidualBlock::param_count).sum::<usize>();
        ParamCount { backbone, embedding_layer: self.embedding.param_count() }
    }

    fn input_map(&self, features: &FeatureMatrix) -> Result<FeatureMap> {
        if features.dims != self.spec.input_mels {
            return Err(Error::DimMismatch { expected: self.spec.input_mels, actual: features.dims });
        }
        if features.frames < MIN_FRAMES {
            return Err(Error::TooFewFrames { frames: features.frames, min: MIN_FRAMES });
        }
        let (f_n, t_n) = (features.dims, features.frames);
        let mut map = FeatureMap::zeros(1, f_n, t_n);
        for t in 0..t_n {
            for (f, &v) in features.row(t).iter().enumerate() {
                map.data[f * t_n + t] = v as f32;
            }
        }
        Ok(map)
    }

    /// Embeds a `T x 80` feature matrix and records the shape of every stage.
    pub fn forward_traced(&self, features: &FeatureMatrix) -> Result<(Vec<f32>, ForwardTrace)> {
        let mut x = self.input_map(features)?;
        x = self.stem.forward(&x);
        x.data.iter_mut().for_each(|v| *v = v.max(0.0));
        let stem = x.shape();
        let mut stages = [(0, 0, 0); 4];
        for (s, blocks) in self.stages.iter().enumerate() {
            for block in blocks {
                x = block.forward(&x);
            }
            stages[s] = x.shape();
        }
        let pooled = stats_pool(&x);
        let emb = self.embedding.forward(&pooled);
        let trace = ForwardTrace { stem, stages, pooled_len: pooled.len(), embedding_len: emb.len() };
        Ok((emb, trace))
    }

    pub fn forward(&self, features: &FeatureMatrix) -> Result<Vec<f32>> {
        self.forward_traced(features).map(|(e, _)| e)
    }

    /// Per-utterance forward over a batch, in input order.
    pub fn forward_batch(&self, batch: &[FeatureMatrix]) -> Result<Vec<Vec<f32>>> {
        batch.par_iter().map(|f| self.forward(f)).collect()
    }

    fn named_layers(&self) -> Vec<(String, &ConvBn)> {
        let mut v = vec![("stem".to_string(), &self.stem)];
        for (s, blocks) in self.stages.iter().enumerate() {
            for (b, block) in blocks.iter().enumerate() {
                for (i, layer) in block.branch.iter().enumerate() {
                    v.push((format!("stage{}.block{b}.branch{i}", s + 1), layer));
                }
                if let Some(sc) = &block.shortcut {
                    v.push((format!("stage{}.block{b}.shortcut", s + 1), sc));
                }
            }
        }
        v
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        let spec_code = match self.spec.code() {
            Some(c) => c,
            None => {
                let s = &self.spec;
                let kind = match s.block_kind {
                    BlockKind::Basic => 0.0,
                    BlockKind::Bottleneck => 1.0,
                };
                let mut desc = vec![kind];
                desc.extend(s.depths.iter().map(|&d| d as f32));
                desc.extend([s.base_width, s.emb_dim, s.input_mels].map(|v| v as f32));
                tensors.push(Tensor::new("spec", vec![desc.len()], desc));
                CUSTOM_SPEC_CODE
            }
        };
        for (name, layer) in self.named_layers() {
            tensors.extend(layer.tensors(&name));
        }
        let e = &self.embedding;
        tensors.push(Tensor::new("embedding.weight", vec![e.out_features, e.in_features], e.weight.clone()));
        tensors.push(Tensor::new("embedding.bias", vec![e.out_features], e.bias.clone()));
        Checkpoint { spec_code, tensors }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let spec = if ck.spec_code == CUSTOM_SPEC_CODE {
            let d = &ck.get("spec")?.data;
            if d.len() != 8 {
                return Err(Error::InvalidSpec("malformed spec tensor".into()));
            }
            let u = |i: usize| d[i] as usize;
            NetSpec {
                block_kind: if d[0] == 0.0 { BlockKind::Basic } else { BlockKind::Bottleneck },
                depths: [u(1), u(2), u(3), u(4)],
                base_width: u(5),
                emb_dim: u(6),
                input_mels: u(7),
            }
        } else {
            NetSpec::from_code(ck.spec_code)?
        };
        let mut net = Self::build(spec, 0)?;
        let names: Vec<String> = net.named_layers().into_iter().map(|(n, _)| n).collect();
        let mut layers: Vec<&mut ConvBn> = vec![&mut net.stem];
        for block in net.stages.iter_mut().flatten() {
            layers.extend(block.branch.iter_mut());
            if let Some(sc) = block.shortcut.as_mut() {
                layers.push(sc);
            }
        }
        for (name, layer) in names.iter().zip(layers) {
            layer.load(name, ck)?;
        }
        layers::copy_into(&mut net.embedding.weight, ck.get("embedding.weight")?)?;
        layers::copy_into(&mut net.embedding.bias, ck.get("embedding.bias")?)?;
        Ok(net)
    }
}

impl Embedder for Network {
    fn dim(&self) -> usize {
        self.spec.emb_dim
    }

    fn embed(&self, audio: &AudioBuffer) -> Result<Vec<f32>> {
        self.forward(&self.frontend.extract(audio)?)
    }
}
