use serde::{Deserialize, Serialize};

use crate::corpus::{SubsampleRule, WindowMode};
use crate::error::{Error, Result};
use crate::objective::LossConfig;

/// How per-triple gradients in a batch are combined before one update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BatchReduction {
    #[default]
    Sum,
    Mean,
}

/// Training hyperparameters. Field names double as the JSON config schema;
/// missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub components: usize,
    pub window: usize,
    pub window_mode: WindowMode,
    pub batch_size: usize,
    pub lr: f64,
    pub margin: f64,
    pub subsample_t: f64,
    pub subsample_rule: SubsampleRule,
    pub min_count: u64,
    pub epochs: usize,
    pub seed: u64,
    pub var_min: f64,
    pub var_max: f64,
    pub neg_exponent: f64,
    /// Negative draws per positive pair; each forms its own triple.
    pub negatives: usize,
    pub tied: bool,
    pub batch_reduction: BatchReduction,
    pub adagrad_eps: f64,
    /// 1 is the deterministic single-writer mode.
    pub threads: usize,
    /// Batches between progress reports.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 50,
            components: 2,
            window: 10,
            window_mode: WindowMode::Dynamic,
            batch_size: 128,
            lr: 0.05,
            margin: 1.0,
            subsample_t: 1e-5,
            subsample_rule: SubsampleRule::Sqrt,
            min_count: 5,
            epochs: 5,
            seed: 1,
            var_min: 1e-4,
            var_max: 1e2,
            neg_exponent: 0.75,
            negatives: 1,
            tied: true,
            batch_reduction: BatchReduction::Sum,
            adagrad_eps: 1e-8,
            threads: 1,
            log_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("components", self.components),
            ("window", self.window),
            ("batch_size", self.batch_size),
            ("negatives", self.negatives),
            ("threads", self.threads),
            ("log_every", self.log_every),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::usage(format!("{name} must be at least 1")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::usage(format!("lr must be positive, got {}", self.lr)));
        }
        LossConfig::new(self.margin)?;
        if !(self.var_min > 0.0 && self.var_min < self.var_max && self.var_max.is_finite()) {
            return Err(Error::usage(format!(
                "variance clamp [{}, {}] is not a positive interval",
                self.var_min, self.var_max
            )));
        }
        if !self.subsample_t.is_finite() || !self.neg_exponent.is_finite() || !(self.adagrad_eps >= 0.0) {
            return Err(Error::usage("subsample_t, neg_exponent and adagrad_eps must be finite"));
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig { margin: self.margin }
    }
}
