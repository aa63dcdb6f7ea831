//! Auxiliary classifiers on frozen per-position activations.
//!
//! Activations are the raw layer outputs: no final norm and no symbol
//! pooling, so every position is classified on its own.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::eval::eval_cipher;
use super::ngram::{similarity_matrix, SimilarityMatrix};
use crate::cipher::{symbol_errors, SymbolId, N_SYMBOLS};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::heads::argmax_rows;
use crate::model::Model;
use crate::params::{truncated_normal, ParamList, ParamListMut, Parameters};
use crate::rng::{derive_seed, stream_rng, streams};
use crate::tensor::Real;
use crate::training::{AdamW, AdamWConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Linear,
    /// One hidden ReLU layer.
    Mlp,
}

impl std::str::FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ProbeKind::Linear),
            "mlp" => Ok(ProbeKind::Mlp),
            other => Err(Error::InvalidArgument(format!("unknown probe kind {other:?} (expected linear or mlp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    /// 0 is the embedding output, `i` the output of layer `i`.
    pub layer: usize,
    /// Hidden width of the MLP; `None` means the model width.
    pub hidden_dim: Option<usize>,
    pub steps: usize,
    /// Sequences per step.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl ProbeSpec {
    pub fn new(kind: ProbeKind, layer: usize) -> Self {
        Self { kind, layer, hidden_dim: None, steps: 5000, batch_size: 96, lr: 1e-3, weight_decay: 0.1, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe<F> {
    pub kind: ProbeKind,
    /// `d × 36` (linear) or `d × h` (MLP).
    pub w1: Array2<F>,
    pub b1: Array1<F>,
    /// `h × 36`, MLP only.
    pub w2: Option<Array2<F>>,
    pub b2: Option<Array1<F>>,
}

struct ProbeCache<F> {
    pre: Option<Array2<F>>,
    hidden: Option<Array2<F>>,
}

impl<F: Real> Probe<F> {
    pub fn init<R: Rng + ?Sized>(kind: ProbeKind, d: usize, hidden: usize, rng: &mut R) -> Self {
        let mut mat = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| truncated_normal(rng, 1.0 / (r as f64).sqrt()));
        match kind {
            ProbeKind::Linear => Self { kind, w1: mat(d, N_SYMBOLS), b1: Array1::zeros(N_SYMBOLS), w2: None, b2: None },
            ProbeKind::Mlp => Self {
                kind,
                w1: mat(d, hidden),
                b1: Array1::zeros(hidden),
                w2: Some(mat(hidden, N_SYMBOLS)),
                b2: Some(Array1::zeros(N_SYMBOLS)),
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: self.w2.as_ref().map(|w| Array2::zeros(w.raw_dim())),
            b2: self.b2.as_ref().map(|b| Array1::zeros(b.raw_dim())),
        }
    }

    fn forward_cached(&self, x: ArrayView2<F>) -> (Array2<F>, ProbeCache<F>) {
        let a = x.dot(&self.w1) + &self.b1;
        match (&self.w2, &self.b2) {
            (Some(w2), Some(b2)) => {
                let h = a.mapv(|v| v.max(F::zero()));
                let logits = h.dot(w2) + b2;
                (logits, ProbeCache { pre: Some(a), hidden: Some(h) })
            }
            _ => (a, ProbeCache { pre: None, hidden: None }),
        }
    }

    /// `[positions × 36]` logits.
    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        self.forward_cached(x).0
    }

    pub fn predict(&self, x: ArrayView2<F>) -> Vec<SymbolId> {
        argmax_rows(self.forward(x).view())
    }

    /// Mean cross-entropy over rows of `x`; gradients land in `grad`.
    pub fn loss_backward(&self, x: ArrayView2<F>, targets: &[SymbolId], grad: &mut Self) -> f64 {
        let (logits, cache) = self.forward_cached(x);
        let n = x.nrows();
        let inv_n = F::of(1.0 / n as f64);
        let mut dlogits = logits;
        let mut loss = 0.0;
        for (mut row, &t) in dlogits.rows_mut().into_iter().zip(targets) {
            let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            loss -= (row[t as usize] / sum).f64().ln();
            row.mapv_inplace(|v| v / sum * inv_n);
            row[t as usize] -= inv_n;
        }
        let input = cache.hidden.as_ref().map_or(x, |h| h.view());
        let (w_top, b_top) = match (&mut grad.w2, &mut grad.b2) {
            (Some(w), Some(b)) => (w, b),
            _ => (&mut grad.w1, &mut grad.b1),
        };
        *w_top += &input.t().dot(&dlogits);
        *b_top += &dlogits.sum_axis(Axis(0));
        if let (Some(w2), Some(pre)) = (&self.w2, &cache.pre) {
            let mut da = dlogits.dot(&w2.t());
            da.zip_mut_with(pre, |d, &a| {
                if a <= F::zero() {
                    *d = F::zero();
                }
            });
            grad.w1 += &x.t().dot(&da);
            grad.b1 += &da.sum_axis(Axis(0));
        }
        loss / n as f64
    }
}

impl<F: Real> Parameters<F> for Probe<F> {
    fn collect_params<'a>(&'a self, list: &mut ParamList<'a, F>) {
        list.push("w1", &self.w1, true);
        list.push("b1", &self.b1, false);
        if let (Some(w), Some(b)) = (&self.w2, &self.b2) {
            list.push("w2", w, true);
            list.push("b2", b, false);
        }
    }

    fn collect_params_mut<'a>(&'a mut self, list: &mut ParamListMut<'a, F>) {
        list.push("w1", &mut self.w1, true);
        list.push("b1", &mut self.b1, false);
        if let (Some(w), Some(b)) = (&mut self.w2, &mut self.b2) {
            list.push("w2", w, true);
            list.push("b2", b, false);
        }
    }
}

/// Frozen activations of a set of encrypted records.
#[derive(Debug, Clone)]
pub struct Activations<F> {
    pub layers: Vec<usize>,
    /// `per_layer[i][record]` is `[len × d]` for `layers[i]`.
    pub per_layer: Vec<Vec<Array2<F>>>,
    /// Plaintext targets per record.
    pub targets: Vec<Vec<SymbolId>>,
}

impl<F: Real> Activations<F> {
    pub fn layer(&self, layer: usize) -> Option<&[Array2<F>]> {
        self.layers.iter().position(|&l| l == layer).map(|i| self.per_layer[i].as_slice())
    }
}

/// Run each plaintext (under its evaluation cipher) through the frozen
/// backbone and keep the raw outputs of `layers`.
pub fn harvest_activations<F: Real>(
    model: &Model<F>,
    plaintexts: &[Vec<SymbolId>],
    cipher_seed: u64,
    layers: &[usize],
    exec: Execution,
) -> Result<Activations<F>> {
    let n = model.config().n_layers;
    if let Some(&layer) = layers.iter().find(|&&l| l > n) {
        return Err(Error::LayerOutOfRange { layer, max: n });
    }
    let per_record = exec.map_range(plaintexts.len(), |i| -> Result<Vec<Array2<F>>> {
        let cipher = eval_cipher(cipher_seed, i).apply(&plaintexts[i])?;
        let states = model.backbone.forward(&cipher, false)?;
        Ok(layers.iter().map(|&l| states.layers[l].clone()).collect())
    });
    let mut per_layer = vec![Vec::with_capacity(plaintexts.len()); layers.len()];
    for rec in per_record {
        for (dst, a) in per_layer.iter_mut().zip(rec?) {
            dst.push(a);
        }
    }
    Ok(Activations { layers: layers.to_vec(), per_layer, targets: plaintexts.to_vec() })
}

fn stack<F: Real>(records: &[Array2<F>], targets: &[Vec<SymbolId>], pick: &[usize]) -> (Array2<F>, Vec<SymbolId>) {
    let rows: usize = pick.iter().map(|&i| records[i].nrows()).sum();
    let d = records[0].ncols();
    let mut x = Array2::zeros((rows, d));
    let mut t = Vec::with_capacity(rows);
    let mut at = 0;
    for &i in pick {
        let r = &records[i];
        x.slice_mut(s![at..at + r.nrows(), ..]).assign(r);
        t.extend_from_slice(&targets[i]);
        at += r.nrows();
    }
    (x, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTraining {
    pub spec: ProbeSpec,
    pub losses: Vec<f64>,
}

/// Train a probe on `records` (one activation block per sequence).
pub fn train_probe<F: Real>(
    spec: &ProbeSpec,
    records: &[Array2<F>],
    targets: &[Vec<SymbolId>],
) -> Result<(Probe<F>, ProbeTraining)> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if records.len() != targets.len() {
        return Err(Error::LengthMismatch(records.len(), targets.len()));
    }
    if let Some((r, t)) = records.iter().zip(targets).find(|(r, t)| r.nrows() != t.len()) {
        return Err(Error::LengthMismatch(r.nrows(), t.len()));
    }
    let d = records[0].ncols();
    let mut rng = stream_rng(spec.seed, streams::PROBE);
    let mut probe = Probe::<F>::init(spec.kind, d, spec.hidden_dim.unwrap_or(d), &mut rng);
    let config = AdamWConfig { lr: spec.lr, weight_decay: spec.weight_decay, ..AdamWConfig::default() };
    let mut opt = AdamW::new(config, &probe.params());
    let mut losses = Vec::with_capacity(spec.steps);
    for step in 0..spec.steps {
        let mut batch_rng = stream_rng(derive_seed(spec.seed, step as u64), streams::BATCH);
        let pick: Vec<usize> = (0..spec.batch_size).map(|_| batch_rng.random_range(0..records.len())).collect();
        let (x, t) = stack(records, targets, &pick);
        let mut grad = probe.zeros_like();
        let loss = probe.loss_backward(x.view(), &t, &mut grad);
        if !loss.is_finite() {
            return Err(Error::Diverged(step as u64));
        }
        losses.push(loss);
        opt.step(probe.params_mut(), grad.params());
    }
    Ok((probe, ProbeTraining { spec: spec.clone(), losses }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub layer: usize,
    pub kind: ProbeKind,
    pub final_loss: Option<f64>,
    pub mean_ser: f64,
    #[serde(skip)]
    pub predictions: Vec<Vec<SymbolId>>,
}

/// Per-position decodings of held-out activations.
pub fn probe_decode<F: Real>(probe: &Probe<F>, records: &[Array2<F>]) -> Vec<Vec<SymbolId>> {
    records.iter().map(|r| probe.predict(r.view())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStudy {
    pub results: Vec<ProbeResult>,
    pub similarity: SimilarityMatrix,
}

/// Train one probe per layer on `train` activations and score it on `test`
/// by SER and by n-gram similarity to the plaintext (`ns`, usually 1..=8).
pub fn probe_study<F: Real>(
    template: &ProbeSpec,
    train: &Activations<F>,
    test: &Activations<F>,
    ns: &[usize],
    exec: Execution,
) -> Result<ProbeStudy> {
    let results = exec.map(&train.layers, |&layer| -> Result<ProbeResult> {
        let spec = ProbeSpec { layer, ..template.clone() };
        let missing = || Error::InvalidArgument(format!("no activations for layer {layer}"));
        let (probe, log) = train_probe(&spec, train.layer(layer).ok_or_else(missing)?, &train.targets)?;
        let predictions = probe_decode(&probe, test.layer(layer).ok_or_else(missing)?);
        let mut total = 0.0;
        for (p, t) in predictions.iter().zip(&test.targets) {
            total += symbol_errors(p, t)? as f64 / t.len().max(1) as f64;
        }
        Ok(ProbeResult {
            layer,
            kind: spec.kind,
            final_loss: log.losses.last().copied(),
            mean_ser: total / test.targets.len().max(1) as f64,
            predictions,
        })
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let per_layer: Vec<(usize, Vec<Vec<SymbolId>>)> = results.iter().map(|r| (r.layer, r.predictions.clone())).collect();
    let similarity = similarity_matrix(&per_layer, &test.targets, ns);
    Ok(ProbeStudy { results, similarity })
}
