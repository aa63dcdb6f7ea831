use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;

use super::norm::{rms_norm, rms_norm_backward};
use super::rope::RopeTable;
use crate::params::{truncated_normal, ParamList, ParamListMut, Parameters};
use crate::tensor::{matmul, softmax_rows, Precision, Real};

/// One pre-norm encoder block: bidirectional multi-head attention with
/// rotary positions, then a SwiGLU feed-forward, each wrapped in a residual.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<F> {
    pub attn_norm: Array1<F>,
    pub wq: Array2<F>,
    pub wk: Array2<F>,
    pub wv: Array2<F>,
    pub wo: Array2<F>,
    pub ffn_norm: Array1<F>,
    pub w_gate: Array2<F>,
    pub w_up: Array2<F>,
    pub w_down: Array2<F>,
    pub n_heads: usize,
}

/// Activations kept from the forward pass for [`EncoderLayer::backward`].
#[derive(Debug, Clone)]
pub struct LayerCache<F> {
    positions: Vec<usize>,
    x: Array2<F>,
    h1: Array2<F>,
    inv1: Array1<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    /// `[n_heads × len × len]` attention probabilities.
    probs: Array3<F>,
    ctx: Array2<F>,
    x_mid: Array2<F>,
    h2: Array2<F>,
    inv2: Array1<F>,
    gate: Array2<F>,
    up: Array2<F>,
    act: Array2<F>,
}

impl<F> LayerCache<F> {
    pub fn attention(&self) -> &Array3<F> {
        &self.probs
    }

    pub fn into_attention(self) -> Array3<F> {
        self.probs
    }
}

#[inline]
fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

impl<F: Real> EncoderLayer<F> {
    /// Fresh layer: truncated-normal projections, zero residual outputs
    /// (`wo`, `w_down`) and unit gains.
    pub fn init<R: Rng + ?Sized>(d: usize, n_heads: usize, ffn: usize, std: f64, rng: &mut R) -> Self {
        let mut mat = |r: usize, c: usize| Array2::from_shape_simple_fn((r, c), || truncated_normal::<F, _>(rng, std));
        let wq = mat(d, d);
        let wk = mat(d, d);
        let wv = mat(d, d);
        let w_gate = mat(d, ffn);
        let w_up = mat(d, ffn);
        Self {
            attn_norm: Array1::ones(d),
            wq,
            wk,
            wv,
            wo: Array2::zeros((d, d)),
            ffn_norm: Array1::ones(d),
            w_gate,
            w_up,
            w_down: Array2::zeros((ffn, d)),
            n_heads,
        }
    }

    /// A zero tensor of the same layout, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        Self {
            attn_norm: Array1::zeros(self.attn_norm.raw_dim()),
            wq: Array2::zeros(self.wq.raw_dim()),
            wk: Array2::zeros(self.wk.raw_dim()),
            wv: Array2::zeros(self.wv.raw_dim()),
            wo: Array2::zeros(self.wo.raw_dim()),
            ffn_norm: Array1::zeros(self.ffn_norm.raw_dim()),
            w_gate: Array2::zeros(self.w_gate.raw_dim()),
            w_up: Array2::zeros(self.w_up.raw_dim()),
            w_down: Array2::zeros(self.w_down.raw_dim()),
            n_heads: self.n_heads,
        }
    }

    pub fn d_model(&self) -> usize {
        self.wq.nrows()
    }

    pub fn head_dim(&self) -> usize {
        self.d_model() / self.n_heads
    }

    /// Forward over the rows of `x`, which sit at `positions` in the
    /// original sequence. Every row attends to every other row.
    pub fn forward(
        &self,
        x: ArrayView2<F>,
        positions: &[usize],
        rope: &RopeTable<F>,
        eps: f64,
        precision: Precision,
    ) -> (Array2<F>, LayerCache<F>) {
        let len = x.nrows();
        let dh = self.head_dim();
        let scale = F::of(1.0 / (dh as f64).sqrt());

        let (h1, inv1) = rms_norm(x, self.attn_norm.view(), eps);
        let mut q = matmul(h1.view(), self.wq.view(), precision);
        let mut k = matmul(h1.view(), self.wk.view(), precision);
        let v = matmul(h1.view(), self.wv.view(), precision);
        rope.rotate(q.view_mut(), positions, false);
        rope.rotate(k.view_mut(), positions, false);

        let mut probs = Array3::zeros((self.n_heads, len, len));
        let mut ctx = Array2::zeros((len, self.d_model()));
        for h in 0..self.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut p = probs.index_axis_mut(Axis(0), h);
            p.assign(&matmul(q.slice(cols), k.slice(cols).t(), precision));
            p.mapv_inplace(|v| v * scale);
            softmax_rows(p.view_mut(), None);
            ctx.slice_mut(cols).assign(&matmul(p.view(), v.slice(cols), precision));
        }

        let x_mid = &x + &matmul(ctx.view(), self.wo.view(), precision);
        let (h2, inv2) = rms_norm(x_mid.view(), self.ffn_norm.view(), eps);
        let gate = matmul(h2.view(), self.w_gate.view(), precision);
        let up = matmul(h2.view(), self.w_up.view(), precision);
        let act = ndarray::Zip::from(&gate).and(&up).map_collect(|&g, &u| g * sigmoid(g) * u);
        let out = &x_mid + &matmul(act.view(), self.w_down.view(), precision);

        let cache = LayerCache {
            positions: positions.to_vec(),
            x: x.to_owned(),
            h1,
            inv1,
            q,
            k,
            v,
            probs,
            ctx,
            x_mid,
            h2,
            inv2,
            gate,
            up,
            act,
        };
        (out, cache)
    }

    /// Backward pass: accumulates parameter gradients into `grad` and
    /// returns the gradient with respect to the layer input.
    pub fn backward(&self, cache: &LayerCache<F>, dout: ArrayView2<F>, rope: &RopeTable<F>, grad: &mut Self) -> Array2<F> {
        let dh = self.head_dim();
        let scale = F::of(1.0 / (dh as f64).sqrt());

        // Feed-forward branch.
        grad.w_down += &cache.act.t().dot(&dout);
        let dact = dout.dot(&self.w_down.t());
        let mut dgate = Array2::zeros(dact.raw_dim());
        let mut dup = Array2::zeros(dact.raw_dim());
        ndarray::Zip::from(&mut dgate)
            .and(&mut dup)
            .and(&dact)
            .and(&cache.gate)
            .and(&cache.up)
            .for_each(|dg, du, &da, &g, &u| {
                let sg = sigmoid(g);
                *du = da * g * sg;
                *dg = da * u * sg * (F::one() + g * (F::one() - sg));
            });
        grad.w_gate += &cache.h2.t().dot(&dgate);
        grad.w_up += &cache.h2.t().dot(&dup);
        let dh2 = dgate.dot(&self.w_gate.t()) + dup.dot(&self.w_up.t());
        let mut dx_mid = dout.to_owned();
        dx_mid += &rms_norm_backward(cache.x_mid.view(), &cache.inv2, self.ffn_norm.view(), dh2.view(), &mut grad.ffn_norm);

        // Attention branch.
        grad.wo += &cache.ctx.t().dot(&dx_mid);
        let dctx = dx_mid.dot(&self.wo.t());
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
        rope.rotate(dq.view_mut(), &cache.positions, true);
        rope.rotate(dk.view_mut(), &cache.positions, true);
        grad.wq += &cache.h1.t().dot(&dq);
        grad.wk += &cache.h1.t().dot(&dk);
        grad.wv += &cache.h1.t().dot(&dv);
        let dh1 = dq.dot(&self.wq.t()) + dk.dot(&self.wk.t()) + dv.dot(&self.wv.t());
        dx_mid + rms_norm_backward(cache.x.view(), &cache.inv1, self.attn_norm.view(), dh1.view(), &mut grad.attn_norm)
    }
}

impl<F: Real> Parameters<F> for EncoderLayer<F> {
    fn collect_params<'a>(&'a self, list: &mut ParamList<'a, F>) {
        list.push("attn_norm", &self.attn_norm, false);
        list.push("wq", &self.wq, true);
        list.push("wk", &self.wk, true);
        list.push("wv", &self.wv, true);
        list.push("wo", &self.wo, true);
        list.push("ffn_norm", &self.ffn_norm, false);
        list.push("w_gate", &self.w_gate, true);
        list.push("w_up", &self.w_up, true);
        list.push("w_down", &self.w_down, true);
    }

    fn collect_params_mut<'a>(&'a mut self, list: &mut ParamListMut<'a, F>) {
        list.push("attn_norm", &mut self.attn_norm, false);
        list.push("wq", &mut self.wq, true);
        list.push("wk", &mut self.wk, true);
        list.push("wv", &mut self.wv, true);
        list.push("wo", &mut self.wo, true);
        list.push("ffn_norm", &mut self.ffn_norm, false);
        list.push("w_gate", &mut self.w_gate, true);
        list.push("w_up", &mut self.w_up, true);
        list.push("w_down", &mut self.w_down, true);
    }
}

/// Apply `layer` to a padded block `[len × d]`. Rows where `pad_mask` is
/// true neither attend nor are attended to; their output rows are zero.
pub fn encoder_layer<F: Real>(
    layer: &EncoderLayer<F>,
    states: ArrayView2<F>,
    pad_mask: &[bool],
    rope: &RopeTable<F>,
    eps: f64,
) -> Array2<F> {
    let keep: Vec<usize> = (0..states.nrows()).filter(|&i| !pad_mask[i]).collect();
    let x = states.select(Axis(0), &keep);
    let (y, _) = layer.forward(x.view(), &keep, rope, eps, Precision::Full);
    let mut out = Array2::zeros(states.raw_dim());
    for (row, &i) in y.rows().into_iter().zip(&keep) {
        out.row_mut(i).assign(&row);
    }
    out
}
