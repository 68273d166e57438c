//! Training configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Hyperparameters of both training phases and of pseudo-label refinement.
///
/// Serialized as a flat JSON object; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub iters_phase1: usize,
    pub iters_phase2: usize,
    pub batch_size: usize,
    pub lambda_ce: f64,
    pub lambda_dice: f64,
    pub lambda_cls: f64,
    /// Teacher momentum.
    pub alpha: f64,
    /// Minimum component area (pixels) kept before prompting.
    pub tau: usize,
    /// Prompt points per component.
    pub k: usize,
    pub gen_size: usize,
    pub finetune_backbone: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.5,
            iters_phase1: 2000,
            iters_phase2: 2000,
            batch_size: 8,
            lambda_ce: 1.0,
            lambda_dice: 1.0,
            lambda_cls: 1.0,
            alpha: 0.999,
            tau: 8,
            k: 1,
            gen_size: 5000,
            finetune_backbone: false,
        }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid("lr", format!("must be finite and > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        for (field, v) in [
            ("lambda_ce", self.lambda_ce),
            ("lambda_dice", self.lambda_dice),
            ("lambda_cls", self.lambda_cls),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(invalid("alpha", format!("must lie in [0, 1), got {}", self.alpha)));
        }
        if self.k == 0 {
            return Err(invalid("k", "must be >= 1"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
