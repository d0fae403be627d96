use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub w_rule: f64,
    pub w_jaccard: f64,
    pub w_cluster: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            w_rule: 0.5,
            w_jaccard: 0.3,
            w_cluster: 0.2,
        }
    }
}

impl ScoreWeights {
    /// `w_rule·rule_conf + w_jaccard·max_jaccard + w_cluster·[same_cluster]`
    pub fn combine(&self, rule_conf: f64, max_jaccard: f64, same_cluster: bool) -> f64 {
        let cluster = if same_cluster { 1.0 } else { 0.0 };
        self.w_rule * rule_conf + self.w_jaccard * max_jaccard + self.w_cluster * cluster
    }

    /// Rescales to sum 1.
    pub fn normalized(&self) -> Result<Self> {
        let sum = self.w_rule + self.w_jaccard + self.w_cluster;
        if !(sum > 0.0) || [self.w_rule, self.w_jaccard, self.w_cluster].iter().any(|w| *w < 0.0) {
            return Err(Error::param("weights", "must be non-negative with a positive sum"));
        }
        Ok(ScoreWeights {
            w_rule: self.w_rule / sum,
            w_jaccard: self.w_jaccard / sum,
            w_cluster: self.w_cluster / sum,
        })
    }
}

/// Every knob of the build pipeline and the scorer. Recorded verbatim in the
/// model artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub min_support: f64,
    pub min_confidence: f64,
    pub max_len: usize,
    pub jenks_k: usize,
    pub stop_class_count: usize,
    pub min_jaccard: f64,
    pub eps: f64,
    pub min_pts: usize,
    pub resolution: f64,
    pub seed: u64,
    pub weights: ScoreWeights,
    /// Medicine names forced into / kept out of the stop list.
    pub forced_stop: Vec<String>,
    pub forced_keep: Vec<String>,
    /// A weak rule flags its consequent as discouraged only when its lift is
    /// below this bound. `None` flags on every weak rule.
    pub discourage_max_lift: Option<f64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            min_support: 0.001,
            min_confidence: 0.9,
            max_len: 5,
            jenks_k: 5,
            stop_class_count: 2,
            min_jaccard: 0.05,
            eps: 0.7,
            min_pts: 3,
            resolution: 1.0,
            seed: 42,
            weights: ScoreWeights::default(),
            forced_stop: Vec::new(),
            forced_keep: Vec::new(),
            discourage_max_lift: Some(1.0),
        }
    }
}

fn in_unit(name: &'static str, v: f64, open_low: bool) -> Result<()> {
    let ok = if open_low { v > 0.0 && v <= 1.0 } else { (0.0..=1.0).contains(&v) };
    if ok {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} out of range")))
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        in_unit("min_support", self.min_support, true)?;
        in_unit("min_confidence", self.min_confidence, false)?;
        in_unit("min_jaccard", self.min_jaccard, false)?;
        in_unit("eps", self.eps, true)?;
        if self.max_len == 0 {
            return Err(Error::param("max_len", "must be at least 1"));
        }
        if self.jenks_k == 0 {
            return Err(Error::param("jenks_k", "must be at least 1"));
        }
        if self.stop_class_count >= self.jenks_k {
            return Err(Error::param("stop_class_count", "must be below jenks_k"));
        }
        if self.min_pts == 0 {
            return Err(Error::param("min_pts", "must be at least 1"));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::param("resolution", "must be positive"));
        }
        let w = &self.weights;
        if [w.w_rule, w.w_jaccard, w.w_cluster].iter().any(|x| !(*x >= 0.0)) {
            return Err(Error::param("weights", "must be non-negative"));
        }
        if (w.w_rule + w.w_jaccard + w.w_cluster - 1.0).abs() > 1e-9 {
            return Err(Error::param("weights", "must sum to 1"));
        }
        if self.discourage_max_lift.is_some_and(|l| !(l > 0.0)) {
            return Err(Error::param("discourage_max_lift", "must be positive"));
        }
        Ok(())
    }
}
