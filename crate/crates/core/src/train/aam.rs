use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::checkpoint::{Checkpoint, Tensor, HEAD_SPEC_CODE};
use crate::error::{Error, Result};

/// Scale and additive angular margin of the AAM softmax.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AamConfig {
    pub scale: f64,
    /// Margin added to the target angle, in radians.
    pub margin: f64,
    pub num_classes: usize,
}

impl AamConfig {
    /// Classification stage: s = 32, m = 0.2.
    pub fn stage_one(num_classes: usize) -> Self {
        Self { scale: 32.0, margin: 0.2, num_classes }
    }

    /// Large-margin finetuning: s = 32, m = 0.5.
    pub fn stage_two(num_classes: usize) -> Self {
        Self { scale: 32.0, margin: 0.5, num_classes }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) {
            return Err(Error::InvalidConfig(format!("AAM scale {} must be positive", self.scale)));
        }
        if !(0.0..PI / 2.0).contains(&self.margin) {
            return Err(Error::InvalidConfig(format!("AAM margin {} outside [0, pi/2)", self.margin)));
        }
        Ok(())
    }

    /// `cos(theta + m)`, falling back to `cos(theta) - m sin(m)` once
    /// `theta + m` would pass pi, together with its derivative in `cos(theta)`.
    fn target_cos(&self, c: f64) -> (f64, f64) {
        let m = self.margin;
        let c = c.clamp(-1.0, 1.0);
        if c <= (PI - m).cos() {
            return (c - m * m.sin(), 1.0);
        }
        let sin = (1.0 - c * c).max(1e-12).sqrt();
        (c * m.cos() - sin * m.sin(), m.cos() + c * m.sin() / sin)
    }
}

/// Class weight vectors of the AAM classifier, `num_classes x dim`,
/// stored unnormalized and normalized on use.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub num_classes: usize,
    pub dim: usize,
    pub weight: Vec<f64>,
}

impl ClassifierHead {
    /// Rows drawn from `N(0, 1/dim)`, so each has norm close to one.
    pub fn random<R: Rng>(num_classes: usize, dim: usize, rng: &mut R) -> Self {
        let std = 1.0 / (dim.max(1) as f64).sqrt();
        let weight = (0..num_classes * dim).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
        Self { num_classes, dim, weight }
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.weight[j * self.dim..(j + 1) * self.dim]
    }

    /// Rows scaled to unit norm.
    pub fn normalized_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_classes)
            .map(|j| {
                let r = self.row(j);
                let n = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                r.iter().map(|v| v / n).collect()
            })
            .collect()
    }

    /// Keeps the first `classes` rows, which hold the unperturbed speakers
    /// under [`super::expand_speed_label`].
    pub fn restrict_to(&self, classes: usize) -> Result<Self> {
        if classes == 0 || classes > self.num_classes {
            return Err(Error::ClassOutOfRange { index: classes, classes: self.num_classes });
        }
        Ok(Self { num_classes: classes, dim: self.dim, weight: self.weight[..classes * self.dim].to_vec() })
    }

    /// Index of the row with the highest cosine to `x`.
    pub fn classify(&self, x: &[f64]) -> usize {
        let rows = self.normalized_rows();
        let mut best = (0, f64::NEG_INFINITY);
        for (j, r) in rows.iter().enumerate() {
            let c: f64 = r.iter().zip(x).map(|(a, b)| a * b).sum();
            if c > best.1 {
                best = (j, c);
            }
        }
        best.0
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            spec_code: HEAD_SPEC_CODE,
            tensors: vec![Tensor::new(
                "head.weight",
                vec![self.num_classes, self.dim],
                self.weight.iter().map(|&v| v as f32).collect(),
            )],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.spec_code != HEAD_SPEC_CODE {
            return Err(Error::InvalidSpec(format!("spec code {} is not a head checkpoint", ck.spec_code)));
        }
        let t = ck.get("head.weight")?;
        if t.dims.len() != 2 {
            return Err(Error::InvalidSpec("head.weight must be rank 2".into()));
        }
        Ok(Self {
            num_classes: t.dims[0],
            dim: t.dims[1],
            weight: t.data.iter().map(|&v| v as f64).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AamOutput {
    pub loss: f64,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AamGrad {
    pub loss: f64,
    /// d loss / d embedding (unnormalized input).
    pub embedding: Vec<f64>,
    /// d loss / d head weights (unnormalized rows), `num_classes x dim`.
    pub head: Vec<f64>,
}

fn check(embedding: &[f64], head: &ClassifierHead, label: usize, cfg: &AamConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.num_classes != head.num_classes {
        return Err(Error::DimMismatch { expected: cfg.num_classes, actual: head.num_classes });
    }
    if embedding.len() != head.dim {
        return Err(Error::DimMismatch { expected: head.dim, actual: embedding.len() });
    }
    if label >= head.num_classes {
        return Err(Error::ClassOutOfRange { index: label, classes: head.num_classes });
    }
    let n = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(n)
}

struct Forward {
    x_hat: Vec<f64>,
    x_norm: f64,
    w_hat: Vec<Vec<f64>>,
    w_norm: Vec<f64>,
    cos: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    loss: f64,
    target_slope: f64,
}

fn forward(embedding: &[f64], head: &ClassifierHead, label: usize, cfg: &AamConfig) -> Result<Forward> {
    let x_norm = check(embedding, head, label, cfg)?;
    let x_hat: Vec<f64> = embedding.iter().map(|v| v / x_norm).collect();
    let mut w_hat = Vec::with_capacity(head.num_classes);
    let mut w_norm = Vec::with_capacity(head.num_classes);
    for j in 0..head.num_classes {
        let r = head.row(j);
        let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        w_norm.push(n);
        w_hat.push(r.iter().map(|v| v / n).collect::<Vec<_>>());
    }
    let cos: Vec<f64> = w_hat
        .iter()
        .map(|w| w.iter().zip(&x_hat).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let mut logits: Vec<f64> = cos.iter().map(|c| cfg.scale * c).collect();
    let (phi, slope) = cfg.target_cos(cos[label]);
    logits[label] = cfg.scale * phi;

    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let others: f64 = exps.iter().enumerate().filter(|&(j, _)| j != label).map(|(_, e)| e).sum();
    // ln_1p keeps precision when the target dominates.
    let loss = if logits[label] == max {
        others.ln_1p()
    } else {
        (max - logits[label]) + (exps[label] + others).ln()
    };
    Ok(Forward { x_hat, x_norm, w_hat, w_norm, cos, logits, probs, loss, target_slope: slope })
}

/// Cross-entropy of the AAM softmax for one example.
pub fn aam_loss(embedding: &[f64], head: &ClassifierHead, label: usize, cfg: &AamConfig) -> Result<AamOutput> {
    let f = forward(embedding, head, label, cfg)?;
    Ok(AamOutput { loss: f.loss, logits: f.logits })
}

/// Loss and its exact gradient with respect to the unnormalized embedding
/// and the unnormalized head rows.
pub fn aam_grad(embedding: &[f64], head: &ClassifierHead, label: usize, cfg: &AamConfig) -> Result<AamGrad> {
    let f = forward(embedding, head, label, cfg)?;
    let dim = head.dim;
    let mut d_emb = vec![0.0; dim];
    let mut d_head = vec![0.0; head.num_classes * dim];
    for j in 0..head.num_classes {
        // dL/dcos_j
        let g = if j == label {
            cfg.scale * (f.probs[j] - 1.0) * f.target_slope
        } else {
            cfg.scale * f.probs[j]
        };
        if g == 0.0 {
            continue;
        }
        let c = f.cos[j];
        let w = &f.w_hat[j];
        let gx = g / f.x_norm;
        let gw = g / f.w_norm[j];
        let row = &mut d_head[j * dim..(j + 1) * dim];
        for k in 0..dim {
            d_emb[k] += gx * (w[k] - c * f.x_hat[k]);
            row[k] = gw * (f.x_hat[k] - c * w[k]);
        }
    }
    Ok(AamGrad { loss: f.loss, embedding: d_emb, head: d_head })
}

/// Summed loss and head gradient over a batch, reduced in input order.
pub fn aam_batch_grad(
    batch: &[(&[f64], usize)],
    head: &ClassifierHead,
    cfg: &AamConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut loss = 0.0;
    let mut grad = vec![0.0; head.weight.len()];
    for &(x, y) in batch {
        let g = aam_grad(x, head, y, cfg)?;
        loss += g.loss;
        for (a, b) in grad.iter_mut().zip(&g.head) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64, classes: usize, dim: usize) -> (Vec<f64>, ClassifierHead, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = ClassifierHead::random(classes, dim, &mut rng);
        let x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        (x, head, rng.random_range(0..classes))
    }

    /// Plain scaled-softmax cross-entropy on cosine logits.
    fn softmax_ce(x: &[f64], head: &ClassifierHead, label: usize, s: f64) -> f64 {
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let logits: Vec<f64> = head
            .normalized_rows()
            .iter()
            .map(|w| s * w.iter().zip(x).map(|(a, b)| a * b / xn).sum::<f64>())
            .collect();
        let lse = logits.iter().map(|z| z.exp()).sum::<f64>().ln();
        lse - logits[label]
    }

    #[test]
    fn zero_margin_is_scaled_softmax() {
        let (x, head, y) = instance(1, 6, 10);
        let cfg = AamConfig { scale: 32.0, margin: 0.0, num_classes: 6 };
        let l = aam_loss(&x, &head, y, &cfg).unwrap().loss;
        assert!((l - softmax_ce(&x, &head, y, 32.0)).abs() < 1e-10);
    }

    #[test]
    fn aligned_two_class_closed_form() {
        let head = ClassifierHead { num_classes: 2, dim: 3, weight: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0] };
        let cfg = AamConfig { scale: 32.0, margin: 0.0, num_classes: 2 };
        let l = aam_loss(&[2.0, 0.0, 0.0], &head, 0, &cfg).unwrap().loss;
        let expected = (-32f64).exp().ln_1p();
        assert!((l - expected).abs() < 1e-20 + 1e-12 * expected);
    }

    #[test]
    fn loss_nondecreasing_in_margin() {
        for seed in 0..20 {
            let (x, head, y) = instance(seed, 5, 8);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..30 {
                let cfg = AamConfig { scale: 32.0, margin: i as f64 * 0.05, num_classes: 5 };
                let l = aam_loss(&x, &head, y, &cfg).unwrap().loss;
                assert!(l >= prev - 1e-12, "seed {seed} margin {}", cfg.margin);
                prev = l;
            }
        }
    }

    #[test]
    fn fallback_branch_is_continuous() {
        let cfg = AamConfig { scale: 1.0, margin: 0.5, num_classes: 1 };
        let edge = (PI - 0.5).cos();
        let (below, _) = cfg.target_cos(edge - 1e-9);
        let (above, _) = cfg.target_cos(edge + 1e-9);
        // cos(pi) = -1 vs cos(theta) - m sin m at the switch point.
        assert!((above - (-1.0)).abs() < 1e-6);
        assert!((below - (edge - 0.5 * 0.5f64.sin())).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        let (x, head, _) = instance(2, 4, 6);
        let cfg = AamConfig::stage_one(4);
        assert!(matches!(aam_loss(&vec![0.0; 6], &head, 0, &cfg), Err(Error::ZeroVector)));
        assert!(matches!(aam_loss(&x, &head, 4, &cfg), Err(Error::ClassOutOfRange { .. })));
        let bad = AamConfig { margin: 2.0, ..cfg };
        assert!(aam_loss(&x, &head, 0, &bad).is_err());
    }

    #[test]
    fn scale_invariance_of_input() {
        let (x, head, y) = instance(3, 7, 12);
        let cfg = AamConfig::stage_one(7);
        let a = aam_loss(&x, &head, y, &cfg).unwrap().loss;
        let scaled: Vec<f64> = x.iter().map(|v| v * 17.5).collect();
        let b = aam_loss(&scaled, &head, y, &cfg).unwrap().loss;
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn duplicated_batch_doubles_gradient() {
        let (x, head, y) = instance(4, 5, 6);
        let cfg = AamConfig::stage_one(5);
        let (l1, g1) = aam_batch_grad(&[(&x, y)], &head, &cfg).unwrap();
        let (l2, g2) = aam_batch_grad(&[(&x, y), (&x, y)], &head, &cfg).unwrap();
        assert_eq!(l2, 2.0 * l1);
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn head_checkpoint_roundtrip() {
        let (_, head, _) = instance(5, 3, 4);
        let back = ClassifierHead::from_checkpoint(&head.to_checkpoint()).unwrap();
        for (a, b) in back.weight.iter().zip(&head.weight) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(back.restrict_to(2).unwrap().num_classes, 2);
        assert!(back.restrict_to(4).is_err());
    }
}
