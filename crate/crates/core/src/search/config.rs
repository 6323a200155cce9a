use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A configuration value that fails validation. `field` is the dotted path
/// relative to the search section.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Search hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Maximum depth of any prompt in the tree.
    pub depth_limit: usize,
    /// Number of descend-expand-backpropagate iterations.
    pub epochs: usize,
    /// Actions generated per expansion.
    pub expand_width: usize,
    /// Variants generated when resampling; 0 disables resampling.
    pub resample_width: usize,
    /// `k` in the UCT bonus.
    pub exploration_weight: f64,
    /// Stop descending once a state reaches this reward.
    pub early_stop_reward: Option<f64>,
    /// Summarize the memory bank once this many entries are unsummarized.
    pub summarize_threshold: u64,
    /// Samples per base-model call (1 uses single-sample prompts).
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub rng_seed: u64,
    /// Record feedback into the memory bank and feed its guidance to rewrites.
    pub use_memory: bool,
    /// Raw entries shown as guidance before the first summary exists.
    pub memory_max_raw: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            depth_limit: 10,
            epochs: 16,
            expand_width: 3,
            resample_width: 2,
            exploration_weight: 2.5,
            early_stop_reward: None,
            summarize_threshold: 8,
            batch_size: 32,
            validation_fraction: 0.3,
            rng_seed: 0,
            use_memory: true,
            memory_max_raw: 10,
        }
    }
}

impl SearchConfig {
    /// Plain MCTS: no memory bank, no resampling.
    pub fn mcts_only(mut self) -> Self {
        self.use_memory = false;
        self.resample_width = 0;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.depth_limit < 1 {
            return Err(ConfigError::new("depth_limit", "must be at least 1"));
        }
        if self.epochs < 1 {
            return Err(ConfigError::new("epochs", "must be at least 1"));
        }
        if self.expand_width < 1 {
            return Err(ConfigError::new("expand_width", "must be at least 1"));
        }
        if !(self.exploration_weight >= 0.0 && self.exploration_weight.is_finite()) {
            return Err(ConfigError::new("exploration_weight", "must be a finite non-negative number"));
        }
        if let Some(r) = self.early_stop_reward {
            if !(0.0..=1.0).contains(&r) {
                return Err(ConfigError::new("early_stop_reward", "must be in [0, 1]"));
            }
        }
        if self.summarize_threshold < 1 {
            return Err(ConfigError::new("summarize_threshold", "must be at least 1"));
        }
        if self.batch_size < 1 {
            return Err(ConfigError::new("batch_size", "must be at least 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 1.0) {
            return Err(ConfigError::new("validation_fraction", "must be in (0, 1]"));
        }
        if self.memory_max_raw < 1 {
            return Err(ConfigError::new("memory_max_raw", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = SearchConfig::default();
        c.validate().unwrap();
        assert_eq!((c.depth_limit, c.epochs, c.expand_width, c.resample_width), (10, 16, 3, 2));
        assert_eq!(c.exploration_weight, 2.5);
        assert_eq!(c.batch_size, 32);
    }

    #[test]
    fn bad_fields_are_named() {
        type Mutation = (fn(&mut SearchConfig), &'static str);
        let cases: [Mutation; 6] = [
            (|c| c.depth_limit = 0, "depth_limit"),
            (|c| c.epochs = 0, "epochs"),
            (|c| c.expand_width = 0, "expand_width"),
            (|c| c.exploration_weight = -1.0, "exploration_weight"),
            (|c| c.validation_fraction = 0.0, "validation_fraction"),
            (|c| c.summarize_threshold = 0, "summarize_threshold"),
        ];
        for (mutate, field) in cases {
            let mut c = SearchConfig::default();
            mutate(&mut c);
            assert_eq!(c.validate().unwrap_err().field, field);
        }
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: SearchConfig = serde_json::from_str(r#"{"epochs": 2}"#).unwrap();
        assert_eq!(c.epochs, 2);
        assert_eq!(c.depth_limit, 10);
        assert!(serde_json::from_str::<SearchConfig>(r#"{"epoch": 2}"#).is_err());
    }
}
