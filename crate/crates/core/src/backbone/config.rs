use serde::{Deserialize, Serialize};

use crate::cipher::VOCAB_SIZE;
use crate::error::{Error, Result};

/// Default context length: longest record (300) plus margin.
pub const DEFAULT_MAX_LEN: usize = 304;
pub const DEFAULT_ROPE_THETA: f64 = 10_000.0;
pub const DEFAULT_NORM_EPS: f64 = 1e-5;
pub const DEFAULT_INIT_STD: f64 = 0.02;

/// Backbone and head hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    #[serde(default = "default_theta")]
    pub rope_theta: f64,
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    #[serde(default)]
    pub size_tag: String,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_eps")]
    pub norm_eps: f64,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
}

fn default_theta() -> f64 {
    DEFAULT_ROPE_THETA
}
fn default_vocab() -> usize {
    VOCAB_SIZE
}
fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}
fn default_eps() -> f64 {
    DEFAULT_NORM_EPS
}
fn default_init_std() -> f64 {
    DEFAULT_INIT_STD
}

/// The scaling ladder: (tag, d_model, layers, heads, ffn_dim).
pub const LADDER: [(&str, usize, usize, usize, usize); 6] = [
    ("0.5M", 128, 2, 4, 512),
    ("3.4M", 256, 4, 4, 768),
    ("10.7M", 384, 6, 6, 1024),
    ("27.3M", 512, 8, 8, 1536),
    ("85M", 768, 12, 12, 2048),
    ("308M", 1024, 24, 16, 2816),
];

impl ModelConfig {
    pub fn new(d_model: usize, n_layers: usize, n_heads: usize, ffn_dim: usize) -> Self {
        Self {
            d_model,
            n_layers,
            n_heads,
            ffn_dim,
            rope_theta: DEFAULT_ROPE_THETA,
            vocab_size: VOCAB_SIZE,
            size_tag: format!("d{d_model}-l{n_layers}-h{n_heads}-f{ffn_dim}"),
            max_len: DEFAULT_MAX_LEN,
            norm_eps: DEFAULT_NORM_EPS,
            init_std: DEFAULT_INIT_STD,
        }
    }

    /// One of the ladder presets by tag, e.g. `"3.4M"`.
    pub fn preset(tag: &str) -> Option<Self> {
        LADDER.iter().find(|p| p.0.eq_ignore_ascii_case(tag)).map(|&(tag, d, l, h, f)| Self {
            size_tag: tag.to_owned(),
            ..Self::new(d, l, h, f)
        })
    }

    pub fn ladder() -> Vec<Self> {
        LADDER.iter().filter_map(|p| Self::preset(p.0)).collect()
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Backbone parameter count excluding the embedding table and heads.
    pub fn block_params(&self) -> usize {
        let d = self.d_model;
        self.n_layers * (4 * d * d + 3 * d * self.ffn_dim + 2 * d) + d
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("ffn_dim", self.ffn_dim),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        if self.n_heads > 0 && !self.d_model.is_multiple_of(self.n_heads) {
            problems.push(format!("d_model {} is not divisible by n_heads {}", self.d_model, self.n_heads));
        } else if self.n_heads > 0 && !self.head_dim().is_multiple_of(2) {
            problems.push(format!("head dimension {} must be even for rotary embeddings", self.head_dim()));
        }
        if self.vocab_size < VOCAB_SIZE {
            problems.push(format!("vocab_size {} is smaller than the alphabet ({VOCAB_SIZE})", self.vocab_size));
        }
        if !(self.rope_theta > 0.0) {
            problems.push("rope_theta must be positive".into());
        }
        if !(self.norm_eps > 0.0) {
            problems.push("norm_eps must be positive".into());
        }
        if !(self.init_std > 0.0) {
            problems.push("init_std must be positive".into());
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
    fn ladder_matches_published_table() {
        let expected = [
            (128, 2, 4, 512),
            (256, 4, 4, 768),
            (384, 6, 6, 1024),
            (512, 8, 8, 1536),
            (768, 12, 12, 2048),
            (1024, 24, 16, 2816),
        ];
        for (cfg, (d, l, h, f)) in ModelConfig::ladder().iter().zip(expected) {
            assert_eq!((cfg.d_model, cfg.n_layers, cfg.n_heads, cfg.ffn_dim), (d, l, h, f));
            assert_eq!(cfg.rope_theta, 10_000.0);
            cfg.validate().unwrap();
        }
        assert_eq!(ModelConfig::ladder().len(), 6);
    }

    #[test]
    fn ladder_tags_match_parameter_counts() {
        for cfg in ModelConfig::ladder() {
            let tag: f64 = cfg.size_tag.trim_end_matches('M').parse().unwrap();
            let millions = cfg.block_params() as f64 / 1e6;
            assert!((millions - tag).abs() / tag < 0.06, "{}: {millions}", cfg.size_tag);
        }
    }

    #[test]
    fn invalid_configs_enumerate_problems() {
        let mut cfg = ModelConfig::new(130, 2, 4, 512);
        cfg.norm_eps = 0.0;
        match cfg.validate() {
            Err(Error::Config(p)) => {
                assert_eq!(p.len(), 2);
                assert!(p[0].contains("divisible"));
            }
            other => panic!("{other:?}"),
        }
        assert!(ModelConfig::new(12, 1, 4, 8).validate().is_err());
    }
}
