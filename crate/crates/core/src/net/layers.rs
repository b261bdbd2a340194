//! Convolution, batch normalization and linear layers on channel-major maps.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};

/// `channels x freq x time` activation map, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub freq: usize,
    pub time: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, freq: usize, time: usize) -> Self {
        Self { channels, freq, time, data: vec![0.0; channels * freq * time] }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.freq, self.time, self.channels)
    }

    pub fn at(&self, c: usize, f: usize, t: usize) -> f32 {
        self.data[(c * self.freq + f) * self.time + t]
    }

    fn relu(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.max(0.0));
    }

    fn add_relu(&mut self, other: &FeatureMap) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = (*a + b).max(0.0);
        }
    }
}

/// Output length of a padded convolution along one axis. Stride-2 layers
/// halve with integer division so that the time axis follows `T // 2`.
pub(crate) fn conv_out_len(len: usize, stride: usize) -> usize {
    len / stride
}

/// Square 2-D convolution without bias and with `kernel / 2` padding: zeros
/// along frequency, edge replication along time, so a time-constant input
/// stays time-constant at every depth.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `out x in x k x k`
    pub weight: Vec<f32>,
}

impl Conv2d {
    pub fn he_init<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let std = (2.0 / fan_in).sqrt();
        let weight = (0..out_channels * in_channels * kernel * kernel)
            .map(|_| (rng.sample::<f64, _>(StandardNormal) * std) as f32)
            .collect();
        Self { in_channels, out_channels, kernel, stride, weight }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len()
    }

    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        debug_assert_eq!(x.channels, self.in_channels);
        let fo = conv_out_len(x.freq, self.stride);
        let to = conv_out_len(x.time, self.stride);
        let n = fo * to;
        let kdim = self.in_channels * self.kernel * self.kernel;
        let mut out = FeatureMap::zeros(self.out_channels, fo, to);

        let direct = self.kernel == 1 && self.stride == 1;
        let cols_owned;
        let cols: &[f32] = if direct {
            &x.data
        } else {
            cols_owned = self.im2col(x, fo, to);
            &cols_owned
        };
        // out (out_c x n) = W (out_c x kdim) * cols (kdim x n)
        unsafe {
            matrixmultiply::sgemm(
                self.out_channels,
                kdim,
                n,
                1.0,
                self.weight.as_ptr(),
                kdim as isize,
                1,
                cols.as_ptr(),
                n as isize,
                1,
                0.0,
                out.data.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        out
    }

    fn im2col(&self, x: &FeatureMap, fo: usize, to: usize) -> Vec<f32> {
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let n = fo * to;
        let last_t = x.time as isize - 1;
        let mut cols = vec![0.0f32; self.in_channels * k * k * n];
        for c in 0..self.in_channels {
            let plane = &x.data[c * x.freq * x.time..(c + 1) * x.freq * x.time];
            for kf in 0..k {
                for kt in 0..k {
                    let row = (c * k + kf) * k + kt;
                    let dst = &mut cols[row * n..(row + 1) * n];
                    for of in 0..fo {
                        let f = (of * self.stride) as isize + kf as isize - pad;
                        if f < 0 || f >= x.freq as isize {
                            continue;
                        }
                        let src = &plane[f as usize * x.time..(f as usize + 1) * x.time];
                        let drow = &mut dst[of * to..(of + 1) * to];
                        for (ot, d) in drow.iter_mut().enumerate() {
                            let t = (ot * self.stride) as isize + kt as isize - pad;
                            *d = src[t.clamp(0, last_t) as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    pub(crate) fn tensor(&self, name: String) -> Tensor {
        Tensor::new(
            name,
            vec![self.out_channels, self.in_channels, self.kernel, self.kernel],
            self.weight.clone(),
        )
    }

    pub(crate) fn load(&mut self, t: &Tensor) -> Result<()> {
        copy_into(&mut self.weight, t)
    }
}

/// Inference-mode batch normalization.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
}

const BN_EPS: f32 = 1e-5;

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        Self::with_scale(channels, 1.0)
    }

    pub fn with_scale(channels: usize, gamma: f32) -> Self {
        Self {
            gamma: vec![gamma; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }

    /// Learnable parameters only (scale and shift).
    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    pub fn apply(&self, x: &mut FeatureMap) {
        let plane = x.freq * x.time;
        for (c, chunk) in x.data.chunks_mut(plane).enumerate() {
            let scale = self.gamma[c] / (self.running_var[c] + BN_EPS).sqrt();
            let shift = self.beta[c] - self.running_mean[c] * scale;
            chunk.iter_mut().for_each(|v| *v = *v * scale + shift);
        }
    }

    pub(crate) fn tensors(&self, prefix: &str) -> Vec<Tensor> {
        let c = self.gamma.len();
        vec![
            Tensor::new(format!("{prefix}.gamma"), vec![c], self.gamma.clone()),
            Tensor::new(format!("{prefix}.beta"), vec![c], self.beta.clone()),
            Tensor::new(format!("{prefix}.running_mean"), vec![c], self.running_mean.clone()),
            Tensor::new(format!("{prefix}.running_var"), vec![c], self.running_var.clone()),
        ]
    }

    pub(crate) fn load(&mut self, prefix: &str, ck: &Checkpoint) -> Result<()> {
        copy_into(&mut self.gamma, ck.get(&format!("{prefix}.gamma"))?)?;
        copy_into(&mut self.beta, ck.get(&format!("{prefix}.beta"))?)?;
        copy_into(&mut self.running_mean, ck.get(&format!("{prefix}.running_mean"))?)?;
        copy_into(&mut self.running_var, ck.get(&format!("{prefix}.running_var"))?)
    }
}

/// Convolution followed by batch normalization.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub conv: Conv2d,
    pub bn: BatchNorm,
}

impl ConvBn {
    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let mut y = self.conv.forward(x);
        self.bn.apply(&mut y);
        y
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.bn.param_count()
    }

    pub(crate) fn tensors(&self, prefix: &str) -> Vec<Tensor> {
        let mut v = vec![self.conv.tensor(format!("{prefix}.conv.weight"))];
        v.extend(self.bn.tensors(&format!("{prefix}.bn")));
        v
    }

    pub(crate) fn load(&mut self, prefix: &str, ck: &Checkpoint) -> Result<()> {
        self.conv.load(ck.get(&format!("{prefix}.conv.weight"))?)?;
        self.bn.load(&format!("{prefix}.bn"), ck)
    }
}

/// Residual unit: either two 3x3 convolutions or a 1x1-3x3-1x1 bottleneck.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub branch: Vec<ConvBn>,
    pub shortcut: Option<ConvBn>,
}

impl ResidualBlock {
    pub fn forward(&self, x: &FeatureMap) -> FeatureMap {
        let mut y = self.branch[0].forward(x);
        for layer in &self.branch[1..] {
            y.relu();
            y = layer.forward(&y);
        }
        match &self.shortcut {
            Some(sc) => y.add_relu(&sc.forward(x)),
            None => y.add_relu(x),
        }
        y
    }

    pub fn param_count(&self) -> usize {
        self.branch.iter().map(ConvBn::param_count).sum::<usize>()
            + self.shortcut.as_ref().map_or(0, ConvBn::param_count)
    }
}

/// Fully connected layer, `out x in` weight plus bias.
#[derive(Debug, Clone)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn init<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let std = (1.0 / in_features as f64).sqrt();
        let weight = (0..in_features * out_features)
            .map(|_| (rng.sample::<f64, _>(StandardNormal) * std) as f32)
            .collect();
        Self { in_features, out_features, weight, bias: vec![0.0; out_features] }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        self.weight
            .chunks(self.in_features)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>() + b)
            .collect()
    }
}

pub(crate) fn copy_into(dst: &mut [f32], t: &Tensor) -> Result<()> {
    if t.data.len() != dst.len() {
        return Err(Error::DimMismatch { expected: dst.len(), actual: t.data.len() });
    }
    dst.copy_from_slice(&t.data);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution used as an oracle for im2col + gemm.
    fn naive_conv(conv: &Conv2d, x: &FeatureMap) -> FeatureMap {
        let fo = conv_out_len(x.freq, conv.stride);
        let to = conv_out_len(x.time, conv.stride);
        let k = conv.kernel;
        let pad = (k / 2) as isize;
        let mut out = FeatureMap::zeros(conv.out_channels, fo, to);
        for o in 0..conv.out_channels {
            for of in 0..fo {
                for ot in 0..to {
                    let mut acc = 0f64;
                    for c in 0..conv.in_channels {
                        for kf in 0..k {
                            for kt in 0..k {
                                let f = (of * conv.stride) as isize + kf as isize - pad;
                                let t = ((ot * conv.stride) as isize + kt as isize - pad)
                                    .clamp(0, x.time as isize - 1);
                                if f < 0 || f >= x.freq as isize {
                                    continue;
                                }
                                let w = conv.weight[((o * conv.in_channels + c) * k + kf) * k + kt];
                                acc += w as f64 * x.at(c, f as usize, t as usize) as f64;
                            }
                        }
                    }
                    out.data[(o * fo + of) * to + ot] = acc as f32;
                }
            }
        }
        out
    }

    #[test]
    fn gemm_conv_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(k, s) in &[(3, 1), (3, 2), (1, 1), (1, 2)] {
            let conv = Conv2d::he_init(3, 5, k, s, &mut rng);
            let mut x = FeatureMap::zeros(3, 9, 7);
            x.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let fast = conv.forward(&x);
            let slow = naive_conv(&conv, &x);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-4, "k={k} s={s}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn stride_two_halves_with_floor() {
        assert_eq!(conv_out_len(80, 2), 40);
        assert_eq!(conv_out_len(201, 2), 100);
        assert_eq!(conv_out_len(7, 1), 7);
    }

    #[test]
    fn identity_batchnorm_is_near_identity() {
        let bn = BatchNorm::identity(2);
        let mut x = FeatureMap { channels: 2, freq: 1, time: 2, data: vec![1.0, -2.0, 3.0, 0.5] };
        let before = x.clone();
        bn.apply(&mut x);
        for (a, b) in x.data.iter().zip(&before.data) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
