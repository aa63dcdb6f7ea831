use ndarray::{Array2, ArrayView2, Axis};

use crate::cipher::SymbolId;
use crate::tensor::Real;

/// One mean-pooled row per distinct input symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSymbols<F> {
    /// `[n_unique × d_model]`.
    pub embeddings: Array2<F>,
    /// Distinct non-pad symbols in ascending id order; row `i` of
    /// `embeddings` belongs to `symbol_ids[i]`.
    pub symbol_ids: Vec<SymbolId>,
    /// Pooled row of each input position, `None` at padding.
    pub scatter_index: Vec<Option<usize>>,
    /// Number of positions pooled into each row.
    pub counts: Vec<usize>,
}

impl<F: Real> PooledSymbols<F> {
    pub fn n_unique(&self) -> usize {
        self.symbol_ids.len()
    }

    pub fn row_of(&self, symbol: SymbolId) -> Option<usize> {
        self.symbol_ids.binary_search(&symbol).ok()
    }

    /// Spread per-row values back to positions; pad positions get `fill`.
    pub fn scatter<T: Copy>(&self, per_row: &[T], fill: T) -> Vec<T> {
        self.scatter_index.iter().map(|r| r.map_or(fill, |r| per_row[r])).collect()
    }

    /// Gradient of the pooling with respect to the input states.
    pub fn backward(&self, d_pooled: ArrayView2<F>) -> Array2<F> {
        let mut out = Array2::zeros((self.scatter_index.len(), d_pooled.ncols()));
        for (mut row, r) in out.rows_mut().into_iter().zip(&self.scatter_index) {
            if let Some(r) = *r {
                let inv = F::one() / F::of(self.counts[r] as f64);
                row.zip_mut_with(&d_pooled.row(r), |o, &g| *o = g * inv);
            }
        }
        out
    }
}

/// Average the states of every position holding the same symbol.
pub fn symbol_pool<F: Real>(states: ArrayView2<F>, tokens: &[SymbolId], pad_mask: &[bool]) -> PooledSymbols<F> {
    let mut symbol_ids: Vec<SymbolId> =
        tokens.iter().zip(pad_mask).filter(|(_, &m)| !m).map(|(&t, _)| t).collect();
    symbol_ids.sort_unstable();
    symbol_ids.dedup();
    let scatter_index: Vec<Option<usize>> = tokens
        .iter()
        .zip(pad_mask)
        .map(|(t, &m)| if m { None } else { symbol_ids.binary_search(t).ok() })
        .collect();
    let mut embeddings = Array2::zeros((symbol_ids.len(), states.ncols()));
    let mut counts = vec![0usize; symbol_ids.len()];
    for (state, r) in states.axis_iter(Axis(0)).zip(&scatter_index) {
        if let Some(r) = *r {
            let mut row = embeddings.row_mut(r);
            row += &state;
            counts[r] += 1;
        }
    }
    for (mut row, &c) in embeddings.rows_mut().into_iter().zip(&counts) {
        let c = F::of(c as f64);
        row.mapv_inplace(|v| v / c);
    }
    PooledSymbols { embeddings, symbol_ids, scatter_index, counts }
}
