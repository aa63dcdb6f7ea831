//! Backbone plus decoding head.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, ModelConfig};
use crate::cipher::{CipherMapping, SymbolId, N_LETTERS};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::heads::{
    apply_permutation, gumbel_noise, hard_assignment, linear_decode, permutation_to_cipher, symbol_pool, BijectiveHead,
    GumbelSinkhorn, LinearHead, PermutationMatrix,
};
use crate::params::{ParamList, ParamListMut, Parameters};
use crate::rng::{stream_rng, streams};
use crate::tensor::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    #[default]
    Standard,
    Bijective,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Standard => "standard",
            HeadKind::Bijective => "bijective",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" | "base" => Ok(HeadKind::Standard),
            "bijective" => Ok(HeadKind::Bijective),
            other => Err(Error::InvalidArgument(format!("unknown head {other:?} (expected standard or bijective)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Head<F> {
    Standard(LinearHead<F>),
    Bijective(BijectiveHead<F>),
}

impl<F: Real> Head<F> {
    pub fn kind(&self) -> HeadKind {
        match self {
            Head::Standard(_) => HeadKind::Standard,
            Head::Bijective(_) => HeadKind::Bijective,
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Head::Standard(h) => Head::Standard(h.zeros_like()),
            Head::Bijective(h) => Head::Bijective(h.zeros_like()),
        }
    }
}

/// Output of one decoding pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoding {
    pub prediction: Vec<SymbolId>,
    /// Hard permutation (bijective head only): row = cipher letter,
    /// column = plaintext letter.
    pub assignment: Option<PermutationMatrix>,
    /// The `26 × 26` score matrix the assignment was solved on.
    pub scores: Option<Array2<f64>>,
}

impl Decoding {
    /// The encryption key implied by the assignment.
    pub fn key(&self) -> Option<CipherMapping> {
        self.assignment.as_ref().map(permutation_to_cipher)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<F> {
    pub backbone: Backbone<F>,
    pub head: Head<F>,
    pub relax: GumbelSinkhorn,
}

impl<F: Real> Model<F> {
    /// Fresh model with weights drawn from `seed`.
    pub fn new(config: &ModelConfig, head: HeadKind, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, streams::INIT);
        let backbone = Backbone::new(config, &mut rng)?;
        let d = config.d_model;
        let head = match head {
            HeadKind::Standard => Head::Standard(LinearHead::init(d, config.init_std, &mut rng)),
            HeadKind::Bijective => Head::Bijective(BijectiveHead::init(d, config.n_heads, config.init_std, &mut rng)),
        };
        Ok(Self { backbone, head, relax: GumbelSinkhorn::default() })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.backbone.config
    }

    pub fn head_kind(&self) -> HeadKind {
        self.head.kind()
    }

    pub fn zeros_like(&self) -> Self {
        Self { backbone: self.backbone.zeros_like(), head: self.head.zeros_like(), relax: self.relax }
    }

    fn check_input(&self, tokens: &[SymbolId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(i) = tokens.iter().position(|&t| t == crate::cipher::PAD) {
            return Err(Error::UnexpectedPad(i));
        }
        Ok(())
    }

    /// The decoding pipeline after the backbone: pooling and the head.
    /// `states` must already be normalized.
    pub fn decode_states(&self, states: ArrayView2<F>, tokens: &[SymbolId]) -> Decoding {
        let pooled = symbol_pool(states, tokens, &vec![false; tokens.len()]);
        match &self.head {
            Head::Standard(head) => {
                Decoding { prediction: linear_decode(head, &pooled), assignment: None, scores: None }
            }
            Head::Bijective(head) => {
                let x = head.logits(pooled.embeddings.view()).0.mapv(|v| v.f64());
                let p = hard_assignment(x.view());
                Decoding { prediction: apply_permutation(&p, tokens), assignment: Some(p), scores: Some(x) }
            }
        }
    }

    /// Decode ciphertext symbols in a single forward pass.
    pub fn decode(&self, tokens: &[SymbolId]) -> Result<Decoding> {
        self.check_input(tokens)?;
        let states = self.backbone.forward(tokens, false)?;
        Ok(self.decode_states(states.final_state.view(), tokens))
    }

    /// Decode the output of layer `layer` (1-based) through the final norm
    /// and the head, as if the remaining layers were absent.
    pub fn early_exit(&self, tokens: &[SymbolId], layer: usize) -> Result<Decoding> {
        Ok(self.early_exit_all(tokens, &[layer])?.remove(0))
    }

    /// Early-exit decodings for several layers from one forward pass.
    pub fn early_exit_all(&self, tokens: &[SymbolId], layers: &[usize]) -> Result<Vec<Decoding>> {
        self.check_input(tokens)?;
        let n = self.config().n_layers;
        if let Some(&layer) = layers.iter().find(|&&l| l == 0 || l > n) {
            return Err(Error::LayerOutOfRange { layer, max: n });
        }
        let states = self.backbone.forward(tokens, false)?;
        Ok(layers
            .iter()
            .map(|&l| {
                let normed = self.backbone.final_normalize(states.layers[l].view());
                self.decode_states(normed.view(), tokens)
            })
            .collect())
    }

    pub fn decode_batch<S: AsRef<[SymbolId]> + Sync>(&self, inputs: &[S], exec: Execution) -> Result<Vec<Decoding>> {
        exec.map(inputs, |t| self.decode(t.as_ref())).into_iter().collect()
    }

    /// Gumbel noise for one training example of the bijective head.
    pub fn sample_noise(&self, seed: u64) -> Option<Array2<f64>> {
        match self.head {
            Head::Bijective(_) => Some(gumbel_noise(&mut stream_rng(seed, streams::GUMBEL), N_LETTERS, N_LETTERS)),
            Head::Standard(_) => None,
        }
    }

    /// Summed per-position loss of one example; gradients of
    /// `scale * loss` are accumulated into `grad`.
    pub fn loss_backward(
        &self,
        tokens: &[SymbolId],
        targets: &[SymbolId],
        noise: Option<&Array2<f64>>,
        scale: F,
        grad: &mut Self,
    ) -> Result<f64> {
        self.check_input(tokens)?;
        if tokens.len() != targets.len() {
            return Err(Error::LengthMismatch(tokens.len(), targets.len()));
        }
        let (states, cache) = self.backbone.forward_train(tokens)?;
        let pooled = symbol_pool(states.view(), tokens, &vec![false; tokens.len()]);
        let (loss, dpooled) = match (&self.head, &mut grad.head) {
            (Head::Standard(head), Head::Standard(g)) => {
                let logits = head.forward(pooled.embeddings.view());
                head.loss_backward(&pooled, &logits, targets, scale, g)
            }
            (Head::Bijective(head), Head::Bijective(g)) => {
                head.loss_backward(&pooled, tokens, targets, &self.relax, noise, scale, g)
            }
            _ => return Err(Error::InvalidArgument("gradient buffer has a different head".into())),
        };
        let dstates = pooled.backward(dpooled.view());
        self.backbone.backward(&cache, dstates.view(), &mut grad.backbone);
        Ok(loss)
    }

    /// Summed per-position loss without gradients.
    pub fn loss(&self, tokens: &[SymbolId], targets: &[SymbolId], noise: Option<&Array2<f64>>) -> Result<f64> {
        let mut scratch = self.zeros_like();
        self.loss_backward(tokens, targets, noise, F::zero(), &mut scratch)
    }
}

impl<F: Real> Parameters<F> for Model<F> {
    fn collect_params<'a>(&'a self, list: &mut ParamList<'a, F>) {
        list.scoped("backbone", |l| self.backbone.collect_params(l));
        list.scoped("head", |l| match &self.head {
            Head::Standard(h) => h.collect_params(l),
            Head::Bijective(h) => h.collect_params(l),
        });
    }

    fn collect_params_mut<'a>(&'a mut self, list: &mut ParamListMut<'a, F>) {
        list.scoped("backbone", |l| self.backbone.collect_params_mut(l));
        let head = &mut self.head;
        list.scoped("head", |l| match head {
            Head::Standard(h) => h.collect_params_mut(l),
            Head::Bijective(h) => h.collect_params_mut(l),
        });
    }
}
