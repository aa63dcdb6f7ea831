//! Bijective decoding head: a learnable 26-row query cross-attends over the
//! pooled symbol states, a linear layer maps each row to 26 plaintext
//! scores, and the resulting matrix is relaxed (training) or solved exactly
//! (inference) as a permutation. Row = cipher letter, column = plaintext
//! letter.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;

use super::assignment::{hard_assignment, PermutationMatrix};
use super::pool::PooledSymbols;
use super::sinkhorn::{gumbel_noise, GumbelSinkhorn};
use crate::cipher::{is_letter, CipherMapping, SymbolId, N_LETTERS, PAD};
use crate::error::{Error, Result};
use crate::params::{truncated_normal, ParamList, ParamListMut, Parameters};
use crate::tensor::{softmax_rows, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct BijectiveHead<F> {
    /// `[26 × d_model]` learnable query.
    pub query: Array2<F>,
    pub wq: Array2<F>,
    pub wk: Array2<F>,
    pub wv: Array2<F>,
    pub wo: Array2<F>,
    /// `[d_model × 26]`.
    pub out: Array2<F>,
    pub out_bias: Array1<F>,
    pub n_heads: usize,
}

/// Forward activations for [`BijectiveHead::backward`].
#[derive(Debug, Clone)]
pub struct BijectiveCache<F> {
    pooled: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Array3<F>,
    ctx: Array2<F>,
    attn_out: Array2<F>,
}

/// Decoding mode of [`bijective_decode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Result of [`bijective_decode`].
#[derive(Debug, Clone)]
pub enum BijectiveOutput {
    /// Soft permutation and the per-position soft decodings (its rows
    /// selected by the one-hot cipher letters; non-letters get `None`).
    Soft { matrix: Array2<f64>, positions: Vec<Option<Vec<f64>>> },
    /// Hard permutation and the decoded symbols.
    Hard { matrix: PermutationMatrix, decoded: Vec<SymbolId> },
}

impl<F: Real> BijectiveHead<F> {
    pub fn init<R: Rng + ?Sized>(d: usize, n_heads: usize, std: f64, rng: &mut R) -> Self {
        let mut mat = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || truncated_normal::<F, _>(rng, std));
        Self {
            query: mat(N_LETTERS, d),
            wq: mat(d, d),
            wk: mat(d, d),
            wv: mat(d, d),
            wo: mat(d, d),
            out: mat(d, N_LETTERS),
            out_bias: Array1::zeros(N_LETTERS),
            n_heads,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            query: Array2::zeros(self.query.raw_dim()),
            wq: Array2::zeros(self.wq.raw_dim()),
            wk: Array2::zeros(self.wk.raw_dim()),
            wv: Array2::zeros(self.wv.raw_dim()),
            wo: Array2::zeros(self.wo.raw_dim()),
            out: Array2::zeros(self.out.raw_dim()),
            out_bias: Array1::zeros(self.out_bias.raw_dim()),
            n_heads: self.n_heads,
        }
    }

    fn head_dim(&self) -> usize {
        self.wq.nrows() / self.n_heads
    }

    /// Score matrix `X` `[26 × 26]` from pooled states `[n_unique × d]`.
    pub fn logits(&self, pooled: ArrayView2<F>) -> (Array2<F>, BijectiveCache<F>) {
        let dh = self.head_dim();
        let scale = F::of(1.0 / (dh as f64).sqrt());
        let q = self.query.dot(&self.wq);
        let k = pooled.dot(&self.wk);
        let v = pooled.dot(&self.wv);
        let n_keys = pooled.nrows();
        let mut probs = Array3::zeros((self.n_heads, N_LETTERS, n_keys));
        let mut ctx = Array2::zeros((N_LETTERS, self.wq.ncols()));
        for h in 0..self.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut p = probs.index_axis_mut(Axis(0), h);
            p.assign(&q.slice(cols).dot(&k.slice(cols).t()));
            p.mapv_inplace(|x| x * scale);
            softmax_rows(p.view_mut(), None);
            ctx.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        }
        let attn_out = ctx.dot(&self.wo);
        let x = attn_out.dot(&self.out) + &self.out_bias;
        (x, BijectiveCache { pooled: pooled.to_owned(), q, k, v, probs, ctx, attn_out })
    }

    /// Accumulate parameter gradients from `dx` (gradient of the score
    /// matrix) and return the gradient with respect to the pooled states.
    pub fn backward(&self, cache: &BijectiveCache<F>, dx: ArrayView2<F>, grad: &mut Self) -> Array2<F> {
        let dh = self.head_dim();
        let scale = F::of(1.0 / (dh as f64).sqrt());
        grad.out += &cache.attn_out.t().dot(&dx);
        grad.out_bias += &dx.sum_axis(Axis(0));
        let d_attn = dx.dot(&self.out.t());
        grad.wo += &cache.ctx.t().dot(&d_attn);
        let dctx = d_attn.dot(&self.wo.t());
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let p = cache.probs.index_axis(Axis(0), h);
            let dctx_h = dctx.slice(cols);
            dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
            let dp = dctx_h.dot(&cache.v.slice(cols).t());
            let mut ds = Array2::zeros(dp.raw_dim());
            for ((mut ds_row, dp_row), p_row) in ds.rows_mut().into_iter().zip(dp.rows()).zip(p.rows()) {
                let dot: F = dp_row.iter().zip(&p_row).map(|(&a, &b)| a * b).sum();
                for ((d, &g), &pv) in ds_row.iter_mut().zip(&dp_row).zip(&p_row) {
                    *d = pv * (g - dot) * scale;
                }
            }
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        grad.wq += &self.query.t().dot(&dq);
        grad.query += &dq.dot(&self.wq.t());
        grad.wk += &cache.pooled.t().dot(&dk);
        grad.wv += &cache.pooled.t().dot(&dv);
        dk.dot(&self.wk.t()) + dv.dot(&self.wv.t())
    }

    /// Training loss: Gumbel-Sinkhorn soft permutation, then per-position
    /// cross-entropy of the soft decoding (the cipher letter's row,
    /// renormalized) against the plaintext letter. Non-letter positions pass
    /// through exactly and contribute zero loss. Returns the summed loss and
    /// the gradient with respect to the pooled rows.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_backward(
        &self,
        pooled: &PooledSymbols<F>,
        tokens: &[SymbolId],
        targets: &[SymbolId],
        relax: &GumbelSinkhorn,
        noise: Option<&Array2<f64>>,
        scale: F,
        grad: &mut Self,
    ) -> (f64, Array2<F>) {
        let (x, cache) = self.logits(pooled.embeddings.view());
        let x64 = x.mapv(|v| v.f64());
        let run = relax.forward(x64.view(), noise);
        let z = run.output();
        let lse: Vec<f64> = z.rows().into_iter().map(|r| crate::tensor::log_sum_exp(r.iter().copied())).collect();
        let mut dz = Array2::<f64>::zeros(z.raw_dim());
        let mut row_weight = [0.0f64; N_LETTERS];
        let mut loss = 0.0;
        for (&c, &t) in tokens.iter().zip(targets) {
            if c == PAD || !is_letter(c) {
                continue;
            }
            let (c, t) = (c as usize, t as usize);
            if t >= N_LETTERS {
                // A letter never decodes to a non-letter under this head.
                loss += f64::INFINITY;
                continue;
            }
            loss += lse[c] - z[[c, t]];
            dz[[c, t]] -= 1.0;
            row_weight[c] += 1.0;
        }
        for (c, &w) in row_weight.iter().enumerate() {
            if w > 0.0 {
                let mut row = dz.row_mut(c);
                row.zip_mut_with(&z.row(c), |d, &zv| *d += w * (zv - lse[c]).exp());
            }
        }
        let dx = relax.backward(&run, dz.view()).mapv(|v| F::of(v) * scale);
        let dpooled = self.backward(&cache, dx.view(), grad);
        (loss, dpooled)
    }
}

impl<F: Real> Parameters<F> for BijectiveHead<F> {
    fn collect_params<'a>(&'a self, list: &mut ParamList<'a, F>) {
        list.push("query", &self.query, true);
        list.push("wq", &self.wq, true);
        list.push("wk", &self.wk, true);
        list.push("wv", &self.wv, true);
        list.push("wo", &self.wo, true);
        list.push("out", &self.out, true);
        list.push("out_bias", &self.out_bias, false);
    }

    fn collect_params_mut<'a>(&'a mut self, list: &mut ParamListMut<'a, F>) {
        list.push("query", &mut self.query, true);
        list.push("wq", &mut self.wq, true);
        list.push("wk", &mut self.wk, true);
        list.push("wv", &mut self.wv, true);
        list.push("wo", &mut self.wo, true);
        list.push("out", &mut self.out, true);
        list.push("out_bias", &mut self.out_bias, false);
    }
}

/// Cipher mapping read off a hard permutation: plaintext letter `p` is
/// encrypted to the cipher letter whose row selects column `p`.
pub fn permutation_to_cipher(p: &PermutationMatrix) -> CipherMapping {
    let mut perm = [0 as SymbolId; N_LETTERS];
    for (cipher, &plain) in p.columns().iter().enumerate() {
        perm[plain] = cipher as SymbolId;
    }
    CipherMapping::from_perm(perm).expect("a permutation matrix is a bijection")
}

/// Apply a hard permutation to cipher symbols; non-letters pass through.
pub fn apply_permutation(p: &PermutationMatrix, tokens: &[SymbolId]) -> Vec<SymbolId> {
    tokens
        .iter()
        .map(|&t| if is_letter(t) { p.column_of(t as usize) as SymbolId } else { t })
        .collect()
}

/// Run the head on pooled states. `Train` samples a Gumbel-Sinkhorn soft
/// permutation and needs `rng`; `Infer` solves the assignment exactly.
pub fn bijective_decode<F: Real, R: Rng + ?Sized>(
    head: &BijectiveHead<F>,
    pooled: &PooledSymbols<F>,
    tokens: &[SymbolId],
    mode: Mode,
    relax: &GumbelSinkhorn,
    rng: Option<&mut R>,
) -> Result<BijectiveOutput> {
    let (x, _) = head.logits(pooled.embeddings.view());
    let x = x.mapv(|v| v.f64());
    match mode {
        Mode::Infer => {
            let matrix = hard_assignment(x.view());
            let decoded = apply_permutation(&matrix, tokens);
            Ok(BijectiveOutput::Hard { matrix, decoded })
        }
        Mode::Train => {
            let rng = rng.ok_or(Error::MissingRng)?;
            let noise = gumbel_noise(rng, N_LETTERS, N_LETTERS);
            let matrix = relax.forward(x.view(), Some(&noise)).output().mapv(f64::exp);
            let positions = tokens
                .iter()
                .map(|&t| is_letter(t).then(|| matrix.row(t as usize).to_vec()))
                .collect();
            Ok(BijectiveOutput::Soft { matrix, positions })
        }
    }
}
