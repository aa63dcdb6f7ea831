use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::pool::PooledSymbols;
use crate::cipher::{SymbolId, N_SYMBOLS};
use crate::params::{truncated_normal, ParamList, ParamListMut, Parameters};
use crate::tensor::{log_sum_exp, Real};

/// Affine map from pooled states to logits over the output symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead<F> {
    /// `[d_model × N_SYMBOLS]`.
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> LinearHead<F> {
    pub fn init<R: Rng + ?Sized>(d: usize, std: f64, rng: &mut R) -> Self {
        Self {
            weight: Array2::from_shape_simple_fn((d, N_SYMBOLS), || truncated_normal::<F, _>(rng, std)),
            bias: Array1::zeros(N_SYMBOLS),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self { weight: Array2::zeros(self.weight.raw_dim()), bias: Array1::zeros(self.bias.raw_dim()) }
    }

    /// `[n_unique × N_SYMBOLS]` logits.
    pub fn forward(&self, pooled: ArrayView2<F>) -> Array2<F> {
        pooled.dot(&self.weight) + &self.bias
    }

    /// Cross-entropy summed over the positions of `pooled` against
    /// per-position `targets`. Returns the summed loss and the gradient with
    /// respect to the pooled rows, accumulating parameter gradients.
    pub fn loss_backward(
        &self,
        pooled: &PooledSymbols<F>,
        logits: &Array2<F>,
        targets: &[SymbolId],
        scale: F,
        grad: &mut Self,
    ) -> (f64, Array2<F>) {
        let mut dlogits = Array2::<F>::zeros(logits.raw_dim());
        let mut loss = 0.0;
        let lse: Vec<F> = logits.rows().into_iter().map(|r| log_sum_exp(r.iter().copied())).collect();
        for (r, &c) in pooled.counts.iter().enumerate() {
            let n = F::of(c as f64);
            let mut row = dlogits.row_mut(r);
            row.zip_mut_with(&logits.row(r), |d, &z| *d = (z - lse[r]).exp() * n);
        }
        for (row, &t) in pooled.scatter_index.iter().zip(targets) {
            if let Some(r) = *row {
                loss += (lse[r] - logits[[r, t as usize]]).f64();
                dlogits[[r, t as usize]] -= F::one();
            }
        }
        dlogits.mapv_inplace(|v| v * scale);
        grad.weight += &pooled.embeddings.t().dot(&dlogits);
        grad.bias += &dlogits.sum_axis(Axis(0));
        let dpooled = dlogits.dot(&self.weight.t());
        (loss, dpooled)
    }
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows<F: Real>(logits: ArrayView2<F>) -> Vec<SymbolId> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best as SymbolId
        })
        .collect()
}

/// Decode pooled logits and scatter the predictions back to positions.
pub fn linear_decode<F: Real>(head: &LinearHead<F>, pooled: &PooledSymbols<F>) -> Vec<SymbolId> {
    let per_row = argmax_rows(head.forward(pooled.embeddings.view()).view());
    pooled.scatter(&per_row, crate::cipher::PAD)
}

/// Convenience wrapper: logits for the pooled rows.
pub fn linear_head<F: Real>(head: &LinearHead<F>, pooled: &PooledSymbols<F>) -> Array2<F> {
    head.forward(pooled.embeddings.view())
}

impl<F: Real> Parameters<F> for LinearHead<F> {
    fn collect_params<'a>(&'a self, list: &mut ParamList<'a, F>) {
        list.push("weight", &self.weight, true);
        list.push("bias", &self.bias, false);
    }

    fn collect_params_mut<'a>(&'a mut self, list: &mut ParamListMut<'a, F>) {
        list.push("weight", &mut self.weight, true);
        list.push("bias", &mut self.bias, false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::symbol_pool;
    use ndarray::array;

    #[test]
    fn zero_head_ties_to_lowest_id() {
        let head = LinearHead::<f64> { weight: Array2::zeros((3, N_SYMBOLS)), bias: Array1::zeros(N_SYMBOLS) };
        let s = array![[1.0, 2.0, 3.0], [0.5, 0.5, 0.5]];
        let pooled = symbol_pool(s.view(), &[4, 9], &[false, false]);
        assert_eq!(linear_head(&head, &pooled).dim(), (2, N_SYMBOLS));
        assert_eq!(linear_decode(&head, &pooled), vec![0, 0]);
    }

    #[test]
    fn loss_matches_per_position_cross_entropy() {
        let mut rng = crate::rng::stream_rng(1, 0);
        let head = LinearHead::<f64>::init(4, 0.5, &mut rng);
        let s = Array2::from_shape_simple_fn((5, 4), || rng.random_range(-1.0..1.0));
        let tokens = [3, 3, 26, 7, 3];
        let targets = [1, 1, 26, 0, 2];
        let pooled = symbol_pool(s.view(), &tokens, &[false; 5]);
        let logits = linear_head(&head, &pooled);
        let mut grad = head.zeros_like();
        let (loss, _) = head.loss_backward(&pooled, &logits, &targets, 1.0, &mut grad);
        let mut expected = 0.0;
        for (pos, &t) in targets.iter().enumerate() {
            let r = pooled.scatter_index[pos].unwrap();
            let row = logits.row(r);
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            expected -= (row[t as usize].exp() / z).ln();
        }
        assert!((loss - expected).abs() < 1e-12);
    }
}
