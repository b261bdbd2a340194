//! Detection metrics over labelled trial scores and ranking metrics for
//! retrieval.
//!
//! The decision rule everywhere is "accept iff score >= threshold", so a
//! score equal to the threshold counts as an accept.

mod retrieval;

pub use retrieval::{average_precision_at, mean_average_precision, RETRIEVAL_CUTOFF};

use std::fmt;

use crate::error::{Error, Result};

/// Error rates swept over every distinct score.
///
/// Point 0 is the threshold `-inf` (accept all), the last point `+inf`
/// (reject all); in between, one point per unique score in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    pub thresholds: Vec<f64>,
    pub fnr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub n_target: usize,
    pub n_nontarget: usize,
}

impl DetCurve {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

pub fn det_sweep(scores: &[f64], is_target: &[bool]) -> Result<DetCurve> {
    if scores.len() != is_target.len() {
        return Err(Error::Misaligned(format!("{} scores, {} labels", scores.len(), is_target.len())));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite score {s}")));
    }
    let n_target = is_target.iter().filter(|&&t| t).count();
    let n_nontarget = is_target.len() - n_target;
    if n_target == 0 || n_nontarget == 0 {
        return Err(Error::SingleClass);
    }
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(is_target.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let (nt, nn) = (n_target as f64, n_nontarget as f64);
    let mut thresholds = vec![f64::NEG_INFINITY];
    let mut fnr = vec![0.0];
    let mut fpr = vec![1.0];
    // Targets / nontargets strictly below the current threshold.
    let (mut miss, mut rejected_non) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let thr = pairs[i].0;
        thresholds.push(thr);
        fnr.push(miss as f64 / nt);
        fpr.push((n_nontarget - rejected_non) as f64 / nn);
        while i < pairs.len() && pairs[i].0 == thr {
            if pairs[i].1 {
                miss += 1;
            } else {
                rejected_non += 1;
            }
            i += 1;
        }
    }
    thresholds.push(f64::INFINITY);
    fnr.push(1.0);
    fpr.push(0.0);
    Ok(DetCurve { thresholds, fnr, fpr, n_target, n_nontarget })
}

/// Equal error rate in percent, linearly interpolated between the two curve
/// points that bracket the FNR/FPR crossing.
pub fn eer(curve: &DetCurve) -> f64 {
    let i = (0..curve.len())
        .find(|&i| curve.fnr[i] >= curve.fpr[i])
        .expect("curve ends with fnr = 1, fpr = 0");
    if i == 0 {
        return 100.0 * curve.fnr[0];
    }
    let (a, b) = (i - 1, i);
    let gap_a = curve.fpr[a] - curve.fnr[a];
    let gap_b = curve.fpr[b] - curve.fnr[b];
    let alpha = gap_a / (gap_a - gap_b);
    100.0 * (curve.fnr[a] + alpha * (curve.fnr[b] - curve.fnr[a]))
}

/// Detection cost parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
    /// Divide by `min(c_miss * p, c_fa * (1 - p))`; raw cost otherwise.
    pub normalized: bool,
}

impl Default for DcfParams {
    fn default() -> Self {
        Self { p_target: 0.01, c_miss: 1.0, c_fa: 1.0, normalized: true }
    }
}

impl DcfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_target > 0.0 && self.p_target < 1.0) {
            return Err(Error::InvalidConfig(format!("p_target {} outside (0, 1)", self.p_target)));
        }
        if !(self.c_miss > 0.0 && self.c_fa > 0.0) {
            return Err(Error::InvalidConfig("detection costs must be positive".into()));
        }
        Ok(())
    }

    fn normalizer(&self) -> f64 {
        if self.normalized {
            (self.c_miss * self.p_target).min(self.c_fa * (1.0 - self.p_target))
        } else {
            1.0
        }
    }

    /// Cost of an operating point given as fractions.
    pub fn cost(&self, fnr: f64, fpr: f64) -> f64 {
        (self.c_miss * self.p_target * fnr + self.c_fa * (1.0 - self.p_target) * fpr) / self.normalizer()
    }
}

/// Minimum detection cost and the smallest threshold attaining it.
pub fn min_dcf(curve: &DetCurve, params: &DcfParams) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::INFINITY);
    for i in 0..curve.len() {
        let c = params.cost(curve.fnr[i], curve.fpr[i]);
        if c < best.0 {
            best = (c, curve.thresholds[i]);
        }
    }
    best
}

/// `(FNR %, FPR %)` of the accept-iff-at-least rule at `threshold`.
pub fn operating_point(curve: &DetCurve, threshold: f64) -> (f64, f64) {
    // Accepted scores are those >= the smallest curve threshold >= `threshold`.
    let idx = curve.thresholds.partition_point(|&t| t < threshold);
    let idx = idx.min(curve.len() - 1);
    (100.0 * curve.fnr[idx], 100.0 * curve.fpr[idx])
}

/// Verification summary mirroring the usual results-table columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub min_dcf: f64,
    pub threshold: f64,
    pub eer: f64,
    pub fnr: f64,
    pub fpr: f64,
    pub p_target: f64,
    pub n_target: usize,
    pub n_nontarget: usize,
}

impl EvalReport {
    pub fn compute(scores: &[f64], is_target: &[bool], params: &DcfParams) -> Result<Self> {
        params.validate()?;
        let curve = det_sweep(scores, is_target)?;
        let (value, threshold) = min_dcf(&curve, params);
        let (fnr, fpr) = operating_point(&curve, threshold);
        Ok(Self {
            min_dcf: value,
            threshold,
            eer: eer(&curve),
            fnr,
            fpr,
            p_target: params.p_target,
            n_target: curve.n_target,
            n_nontarget: curve.n_nontarget,
        })
    }

    /// Parses the key=value form produced by `Display`.
    pub fn parse(text: &str) -> Result<Self> {
        let get = |key: &str| -> Result<f64> {
            text.lines()
                .filter_map(|l| l.split_once('='))
                .find(|(k, _)| k.trim() == key)
                .and_then(|(_, v)| v.trim().parse().ok())
                .ok_or_else(|| Error::InvalidConfig(format!("report lacks {key}")))
        };
        Ok(Self {
            min_dcf: get("min_dcf")?,
            threshold: get("threshold")?,
            eer: get("eer_percent")?,
            fnr: get("fnr_percent")?,
            fpr: get("fpr_percent")?,
            p_target: get("p_target")?,
            n_target: get("n_target")? as usize,
            n_nontarget: get("n_nontarget")? as usize,
        })
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "min_dcf={}", self.min_dcf)?;
        writeln!(f, "threshold={}", self.threshold)?;
        writeln!(f, "eer_percent={}", self.eer)?;
        writeln!(f, "fnr_percent={}", self.fnr)?;
        writeln!(f, "fpr_percent={}", self.fpr)?;
        writeln!(f, "p_target={}", self.p_target)?;
        writeln!(f, "n_target={}", self.n_target)?;
        writeln!(f, "n_nontarget={}", self.n_nontarget)
    }
}

/// Curve points as `threshold fnr fpr` text lines.
pub fn format_det(curve: &DetCurve) -> String {
    let mut s = String::new();
    for i in 0..curve.len() {
        s.push_str(&format!("{} {} {}\n", curve.thresholds[i], curve.fnr[i], curve.fpr[i]));
    }
    s
}
