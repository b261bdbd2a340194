use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scoring::{CohortSelection, ScoreAvgNorm, Strategy};

/// Pipeline settings read from a `key=value` file. Blank lines and `#`
/// comments are ignored; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub top_k: usize,
    /// `false` scores against the first `top_k` cohort entries instead of
    /// the `top_k` highest-scoring ones.
    pub adaptive_cohort: bool,
    pub p_target: f64,
    pub strategy: Strategy,
    pub asnorm: bool,
    pub score_avg_norm: ScoreAvgNorm,
    pub fusion_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            top_k: 600,
            adaptive_cohort: true,
            p_target: 0.01,
            strategy: Strategy::EmbAvg,
            asnorm: true,
            score_avg_norm: ScoreAvgNorm::BeforeAverage,
            fusion_weights: None,
            seed: 0,
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Some(true),
        "false" | "off" | "no" | "0" => Some(false),
        _ => None,
    }
}

impl Config {
    pub fn selection(&self) -> CohortSelection {
        if self.adaptive_cohort {
            CohortSelection::TopK(self.top_k)
        } else {
            CohortSelection::Fixed(self.top_k)
        }
    }

    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::InvalidConfig(format!("{key}: expected {what}, got {value:?}"));
        match key {
            "top_k" => {
                self.top_k = value.parse().map_err(|_| bad("a positive integer"))?;
                if self.top_k == 0 {
                    return Err(bad("a positive integer"));
                }
            }
            "cohort_mode" => {
                self.adaptive_cohort = match value {
                    "topk" | "adaptive" => true,
                    "fixed" => false,
                    _ => return Err(bad("topk|fixed")),
                }
            }
            "p_target" => {
                self.p_target = value.parse().map_err(|_| bad("a probability"))?;
                if !(self.p_target > 0.0 && self.p_target < 1.0) {
                    return Err(bad("a probability in (0, 1)"));
                }
            }
            "strategy" => self.strategy = value.parse()?,
            "asnorm" => self.asnorm = parse_bool(value).ok_or_else(|| bad("on|off"))?,
            "score_avg_norm" => self.score_avg_norm = value.parse()?,
            "fusion_weights" => {
                let w = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("comma-separated numbers"))?;
                self.fusion_weights = Some(w);
            }
            "seed" => self.seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
            _ => return Err(Error::InvalidConfig(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides such as those given on a command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        for p in pairs {
            let p = p.as_ref();
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override {p:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn parse_str(text: &str, source: &Path) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { path: source.to_path_buf(), line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| parse_err("expected key=value".into()))?;
            cfg.set(k.trim(), v.trim()).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_str(&std::fs::read_to_string(path)?, path)
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "top_k={}", self.top_k)?;
        writeln!(f, "cohort_mode={}", if self.adaptive_cohort { "topk" } else { "fixed" })?;
        writeln!(f, "p_target={}", self.p_target)?;
        writeln!(f, "strategy={}", self.strategy)?;
        writeln!(f, "asnorm={}", if self.asnorm { "on" } else { "off" })?;
        let avg = match self.score_avg_norm {
            ScoreAvgNorm::BeforeAverage => "before",
            ScoreAvgNorm::AfterAverage => "after",
        };
        writeln!(f, "score_avg_norm={avg}")?;
        if let Some(w) = &self.fusion_weights {
            let w: Vec<String> = w.iter().map(|x| x.to_string()).collect();
            writeln!(f, "fusion_weights={}", w.join(","))?;
        }
        writeln!(f, "seed={}", self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!(c.top_k, 600);
        assert_eq!(c.p_target, 0.01);
        assert_eq!(c.strategy, Strategy::EmbAvg);
        assert!(c.asnorm);
        assert_eq!(c.selection(), CohortSelection::TopK(600));
    }

    #[test]
    fn parse_and_override() {
        let text = "# comment\ntop_k = 300\nstrategy=score-avg\nasnorm=off\n\nfusion_weights=0.4,0.6\n";
        let mut c = Config::parse_str(text, Path::new("x.conf")).unwrap();
        assert_eq!(c.top_k, 300);
        assert_eq!(c.strategy, Strategy::ScoreAvg);
        assert!(!c.asnorm);
        assert_eq!(c.fusion_weights, Some(vec![0.4, 0.6]));
        c.apply_overrides(&["top_k=50", "cohort_mode=fixed"]).unwrap();
        assert_eq!(c.selection(), CohortSelection::Fixed(50));
        let back = Config::parse_str(&c.to_string(), Path::new("y")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_line() {
        let e = Config::parse_str("top_k=10\nbogus=1\n", Path::new("c.conf")).unwrap_err();
        assert!(e.to_string().starts_with("c.conf:2:"), "{e}");
        assert!(Config::parse_str("p_target=2\n", Path::new("c")).is_err());
        assert!(Config::parse_str("no equals\n", Path::new("c")).is_err());
    }
}
