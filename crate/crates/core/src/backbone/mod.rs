//! Encoder-only transformer backbone.
//!
//! Rows are feature vectors (`y = x · W`). Sequences run at their unpadded
//! length, which is exactly equivalent to masking padded keys; the padded
//! entry points strip padding, run, and write zeros back into pad rows.

mod config;
mod layer;
mod norm;
mod rope;

use std::sync::Arc;

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;

pub use config::{ModelConfig, DEFAULT_INIT_STD, DEFAULT_MAX_LEN, DEFAULT_NORM_EPS, DEFAULT_ROPE_THETA, LADDER};
pub use layer::{encoder_layer, EncoderLayer, LayerCache};
pub use norm::{rms_norm, rms_norm_backward};
pub use rope::{apply_rope, RopeTable};

use crate::cipher::{SymbolId, PAD};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::params::{truncated_normal, ParamList, ParamListMut, Parameters};
use crate::tensor::{Precision, Real};

/// Per-layer activations of one sequence.
#[derive(Debug, Clone)]
pub struct HiddenStates<F> {
    /// `n_layers + 1` blocks of `[len × d_model]`: index 0 is the embedding
    /// output, index `i` the output of layer `i`.
    pub layers: Vec<Array2<F>>,
    /// Output of the final RMSNorm applied to the last layer.
    pub final_state: Array2<F>,
    /// Per-layer attention probabilities `[n_heads × len × len]`, when requested.
    pub attention: Option<Vec<Array3<F>>>,
}

impl<F> HiddenStates<F> {
    pub fn n_layers(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn len(&self) -> usize {
        self.final_state.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Activations kept by [`Backbone::forward_train`].
pub struct BackboneCache<F> {
    tokens: Vec<SymbolId>,
    layers: Vec<LayerCache<F>>,
    last: Array2<F>,
    inv_rms: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone<F> {
    pub config: ModelConfig,
    pub embedding: Array2<F>,
    pub layers: Vec<EncoderLayer<F>>,
    pub final_norm: Array1<F>,
    pub precision: Precision,
    rope: Arc<RopeTable<F>>,
}

impl<F: Real> Backbone<F> {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let std = config.init_std;
        let embedding = Array2::from_shape_simple_fn((config.vocab_size, d), || truncated_normal::<F, _>(rng, std));
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayer::init(d, config.n_heads, config.ffn_dim, std, rng))
            .collect();
        Ok(Self {
            config: config.clone(),
            embedding,
            layers,
            final_norm: Array1::ones(d),
            precision: Precision::Full,
            rope: Arc::new(RopeTable::new(config.max_len, config.head_dim(), config.rope_theta)?),
        })
    }

    /// All-zero copy used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            embedding: Array2::zeros(self.embedding.raw_dim()),
            layers: self.layers.iter().map(EncoderLayer::zeros_like).collect(),
            final_norm: Array1::zeros(self.final_norm.raw_dim()),
            precision: self.precision,
            rope: Arc::clone(&self.rope),
        }
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    fn check_tokens(&self, tokens: &[SymbolId]) -> Result<()> {
        if tokens.len() > self.config.max_len {
            return Err(Error::TooLong { len: tokens.len(), max: self.config.max_len });
        }
        match tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            Some(&token) => Err(Error::TokenOutOfRange { token, vocab: self.config.vocab_size }),
            None => Ok(()),
        }
    }

    /// Static embedding rows for `tokens`.
    pub fn embed(&self, tokens: &[SymbolId]) -> Result<Array2<F>> {
        self.check_tokens(tokens)?;
        let idx: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        Ok(self.embedding.select(Axis(0), &idx))
    }

    /// Apply the final RMSNorm to an activation block.
    pub fn final_normalize(&self, x: ArrayView2<F>) -> Array2<F> {
        rms_norm(x, self.final_norm.view(), self.config.norm_eps).0
    }

    /// Full forward pass over an unpadded sequence, keeping every layer.
    pub fn forward(&self, tokens: &[SymbolId], capture_attention: bool) -> Result<HiddenStates<F>> {
        if tokens.contains(&PAD) {
            let mask: Vec<bool> = tokens.iter().map(|&t| t == PAD).collect();
            return self.forward_padded(tokens, &mask, capture_attention);
        }
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let mut x = self.embed(tokens)?;
        let mut layers = Vec::with_capacity(self.layers.len() + 1);
        let mut attention = capture_attention.then(Vec::new);
        for layer in &self.layers {
            let (y, cache) = layer.forward(x.view(), &positions, &self.rope, self.config.norm_eps, self.precision);
            if let Some(a) = attention.as_mut() {
                a.push(cache.into_attention());
            }
            layers.push(std::mem::replace(&mut x, y));
        }
        let final_state = self.final_normalize(x.view());
        layers.push(x);
        Ok(HiddenStates { layers, final_state, attention })
    }

    /// Forward over a padded sequence. Pad rows are excluded from attention
    /// and come back as zeros in every block.
    pub fn forward_padded(&self, tokens: &[SymbolId], pad_mask: &[bool], capture_attention: bool) -> Result<HiddenStates<F>> {
        if pad_mask.len() != tokens.len() {
            return Err(Error::LengthMismatch(pad_mask.len(), tokens.len()));
        }
        self.check_tokens(tokens)?;
        let keep: Vec<usize> = (0..tokens.len()).filter(|&i| !pad_mask[i]).collect();
        let kept: Vec<SymbolId> = keep.iter().map(|&i| tokens[i]).collect();
        if kept.contains(&PAD) {
            return Err(Error::UnexpectedPad(keep[kept.iter().position(|&t| t == PAD).unwrap_or(0)]));
        }
        // Positions are the original indices, so interior padding keeps offsets intact.
        let mut x = self.embed(&kept)?;
        let mut layers = Vec::with_capacity(self.layers.len() + 1);
        let mut attention = capture_attention.then(Vec::new);
        let scatter = |a: &Array2<F>| {
            let mut out = Array2::zeros((tokens.len(), self.d_model()));
            for (row, &i) in a.rows().into_iter().zip(&keep) {
                out.row_mut(i).assign(&row);
            }
            out
        };
        let n = tokens.len();
        for layer in &self.layers {
            let (y, cache) = layer.forward(x.view(), &keep, &self.rope, self.config.norm_eps, self.precision);
            if let Some(a) = attention.as_mut() {
                let probs = cache.into_attention();
                let mut full = Array3::zeros((probs.shape()[0], n, n));
                for h in 0..probs.shape()[0] {
                    for (qi, &i) in keep.iter().enumerate() {
                        for (ki, &j) in keep.iter().enumerate() {
                            full[[h, i, j]] = probs[[h, qi, ki]];
                        }
                    }
                }
                a.push(full);
            }
            layers.push(scatter(&x));
            x = y;
        }
        let final_state = scatter(&self.final_normalize(x.view()));
        layers.push(scatter(&x));
        Ok(HiddenStates { layers, final_state, attention })
    }

    /// Final normalized states of every row of a padded batch `[B × L]`,
    /// returned as `[B × L × d]` with zero pad rows.
    pub fn forward_batch(&self, tokens: ArrayView2<SymbolId>, pad_mask: ArrayView2<bool>, exec: Execution) -> Result<Array3<F>> {
        let (b, l) = tokens.dim();
        let rows = exec.map_range(b, |r| {
            let t: Vec<SymbolId> = tokens.row(r).to_vec();
            let m: Vec<bool> = pad_mask.row(r).to_vec();
            self.forward_padded(&t, &m, false).map(|h| h.final_state)
        });
        let mut out = Array3::zeros((b, l, self.d_model()));
        for (r, row) in rows.into_iter().enumerate() {
            out.index_axis_mut(Axis(0), r).assign(&row?);
        }
        Ok(out)
    }

    /// Forward pass that keeps what [`Backbone::backward`] needs. Returns
    /// the final normalized states.
    pub fn forward_train(&self, tokens: &[SymbolId]) -> Result<(Array2<F>, BackboneCache<F>)> {
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let mut x = self.embed(tokens)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, cache) = layer.forward(x.view(), &positions, &self.rope, self.config.norm_eps, self.precision);
            caches.push(cache);
            x = y;
        }
        let (out, inv_rms) = rms_norm(x.view(), self.final_norm.view(), self.config.norm_eps);
        Ok((out, BackboneCache { tokens: tokens.to_vec(), layers: caches, last: x, inv_rms }))
    }

    /// Accumulate gradients of all backbone parameters into `grad` given the
    /// gradient of the loss with respect to the final normalized states.
    pub fn backward(&self, cache: &BackboneCache<F>, dout: ArrayView2<F>, grad: &mut Self) {
        let mut dx = rms_norm_backward(cache.last.view(), &cache.inv_rms, self.final_norm.view(), dout, &mut grad.final_norm);
        for ((layer, lc), g) in self.layers.iter().zip(&cache.layers).zip(grad.layers.iter_mut()).rev() {
            dx = layer.backward(lc, dx.view(), &self.rope, g);
        }
        for (row, &t) in dx.rows().into_iter().zip(&cache.tokens) {
            let mut target = grad.embedding.row_mut(t as usize);
            target += &row;
        }
    }
}

impl<F: Real> Parameters<F> for Backbone<F> {
    fn collect_params<'a>(&'a self, list: &mut ParamList<'a, F>) {
        list.push("embedding", &self.embedding, true);
        for (i, layer) in self.layers.iter().enumerate() {
            list.scoped(&format!("layers.{i}"), |l| layer.collect_params(l));
        }
        list.push("final_norm", &self.final_norm, false);
    }

    fn collect_params_mut<'a>(&'a mut self, list: &mut ParamListMut<'a, F>) {
        list.push("embedding", &mut self.embedding, true);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            list.scoped(&format!("layers.{i}"), |l| layer.collect_params_mut(l));
        }
        list.push("final_norm", &mut self.final_norm, false);
    }
}
