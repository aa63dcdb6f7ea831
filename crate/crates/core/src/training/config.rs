use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamWConfig;
use crate::backbone::ModelConfig;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::heads::{DEFAULT_ITERS, DEFAULT_TAU};
use crate::model::HeadKind;
use crate::tensor::Precision;

/// Everything that defines a training run. Loadable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Number of distinct training ciphers; absent means a fresh cipher per example.
    pub cipher_pool_size: Option<usize>,
    pub head: HeadKind,
    /// Ladder preset tag, used when `model` is absent.
    pub size: String,
    pub model: Option<ModelConfig>,
    pub precision: Precision,
    pub tau: f64,
    pub sinkhorn_iters: usize,
    pub checkpoint_every: u64,
    pub log_every: u64,
    pub validate_every: u64,
    pub validation_size: usize,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        Self {
            steps: 1000,
            batch_size: 96,
            lr: adam.lr,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            weight_decay: adam.weight_decay,
            seed: 0,
            cipher_pool_size: None,
            head: HeadKind::Standard,
            size: "0.5M".into(),
            model: None,
            precision: Precision::Full,
            tau: DEFAULT_TAU,
            sinkhorn_iters: DEFAULT_ITERS,
            checkpoint_every: 1000,
            log_every: 50,
            validate_every: 500,
            validation_size: 512,
            execution: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    /// Parse TOML, or JSON when the path ends in `.json`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(vec![e.to_string()]))?
        } else {
            toml::from_str(&text)?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        match &self.model {
            Some(m) => Ok(m.clone()),
            None => ModelConfig::preset(&self.size)
                .ok_or_else(|| Error::Config(vec![format!("unknown model size {:?}", self.size)])),
        }
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Check every field and report all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".to_owned());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            problems.push("lr must be a nonnegative number".to_owned());
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                problems.push(format!("{name} must lie in [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            problems.push("adam_eps must be positive".to_owned());
        }
        if !(self.weight_decay >= 0.0) {
            problems.push("weight_decay must be nonnegative".to_owned());
        }
        if self.cipher_pool_size == Some(0) {
            problems.push("cipher_pool_size must be positive when set".to_owned());
        }
        if !(self.tau > 0.0) {
            problems.push(format!("tau must be positive, got {}", self.tau));
        }
        for (name, v) in [("checkpoint_every", self.checkpoint_every), ("log_every", self.log_every), ("validate_every", self.validate_every)] {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        match self.model_config() {
            Ok(m) => {
                if let Err(Error::Config(p)) = m.validate() {
                    problems.extend(p.into_iter().map(|p| format!("model: {p}")));
                }
            }
            Err(Error::Config(p)) => problems.extend(p),
            Err(e) => problems.push(e.to_string()),
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_recipe() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.lr, c.adam_beta1, c.adam_beta2, c.adam_eps, c.weight_decay), (96, 1e-4, 0.9, 0.95, 1e-5, 0.1));
        assert_eq!((c.tau, c.sinkhorn_iters), (4.75, 6));
        c.validate().unwrap();
    }

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(&toml_path, "steps = 20\nhead = \"bijective\"\ncipher_pool_size = 10\nsize = \"3.4M\"\n").unwrap();
        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, r#"{"steps": 20, "head": "bijective", "cipher_pool_size": 10, "size": "3.4M"}"#).unwrap();
        let a = TrainConfig::from_file(&toml_path).unwrap();
        assert_eq!(a, TrainConfig::from_file(&json_path).unwrap());
        assert_eq!(a.model_config().unwrap().d_model, 256);
    }

    #[test]
    fn all_problems_are_listed() {
        let c = TrainConfig { batch_size: 0, tau: -1.0, size: "1B".into(), ..Default::default() };
        match c.validate() {
            Err(Error::Config(p)) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(toml::from_str::<TrainConfig>("stpes = 3").is_err());
    }
}
