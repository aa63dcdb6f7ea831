use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};
use crate::tensor::Real;

/// Precomputed rotary angles for interleaved pairs `(2i, 2i+1)` with
/// frequency `theta^(-2i/head_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RopeTable<F> {
    cos: Array2<F>,
    sin: Array2<F>,
    head_dim: usize,
}

impl<F: Real> RopeTable<F> {
    pub fn new(max_len: usize, head_dim: usize, theta: f64) -> Result<Self> {
        if !head_dim.is_multiple_of(2) {
            return Err(Error::OddHeadDim(head_dim));
        }
        let half = head_dim / 2;
        let mut cos = Array2::zeros((max_len, half));
        let mut sin = Array2::zeros((max_len, half));
        for p in 0..max_len {
            for i in 0..half {
                let freq = theta.powf(-2.0 * i as f64 / head_dim as f64);
                let angle = p as f64 * freq;
                cos[[p, i]] = F::of(angle.cos());
                sin[[p, i]] = F::of(angle.sin());
            }
        }
        Ok(Self { cos, sin, head_dim })
    }

    pub fn max_len(&self) -> usize {
        self.cos.nrows()
    }

    /// Rotate every head of `x` (`[len × n_heads*head_dim]`) in place; row `r`
    /// sits at position `positions[r]`. `inverse` applies the transpose
    /// rotation, which is also the backward pass.
    pub fn rotate(&self, mut x: ArrayViewMut2<F>, positions: &[usize], inverse: bool) {
        let half = self.head_dim / 2;
        for (mut row, &p) in x.rows_mut().into_iter().zip(positions) {
            let row = row.as_slice_mut().expect("contiguous rows");
            let (cos, sin) = (self.cos.row(p), self.sin.row(p));
            for head in row.chunks_exact_mut(self.head_dim) {
                for i in 0..half {
                    let (c, mut s) = (cos[i], sin[i]);
                    if inverse {
                        s = -s;
                    }
                    let (a, b) = (head[2 * i], head[2 * i + 1]);
                    head[2 * i] = a * c - b * s;
                    head[2 * i + 1] = a * s + b * c;
                }
            }
        }
    }
}

/// Rotate a single-head block `[len × head_dim]` at the given positions.
pub fn apply_rope<F: Real>(x: ArrayView2<F>, positions: &[usize], theta: f64) -> Result<Array2<F>> {
    let head_dim = x.ncols();
    let max_pos = positions.iter().copied().max().map_or(0, |p| p + 1);
    if positions.len() != x.nrows() {
        return Err(Error::LengthMismatch(positions.len(), x.nrows()));
    }
    let table = RopeTable::new(max_pos, head_dim, theta)?;
    let mut out = x.as_standard_layout().into_owned();
    table.rotate(out.view_mut(), positions, false);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::Rng;

    use crate::rng::stream_rng;

    #[test]
    fn position_zero_is_identity() {
        let x = Array::from_shape_fn((1, 8), |(_, j)| j as f64 + 0.5);
        assert_eq!(apply_rope(x.view(), &[0], 10_000.0).unwrap(), x);
    }

    #[test]
    fn odd_head_dim_rejected() {
        let x = Array2::<f64>::zeros((2, 5));
        assert!(matches!(apply_rope(x.view(), &[0, 1], 10_000.0), Err(Error::OddHeadDim(5))));
    }

    #[test]
    fn pair_norms_preserved() {
        let mut rng = stream_rng(3, 0);
        let x = Array::from_shape_fn((20, 16), |_| rng.random_range(-1.0f64..1.0));
        let pos: Vec<usize> = (0..20).map(|p| p * 13).collect();
        let y = apply_rope(x.view(), &pos, 10_000.0).unwrap();
        for r in 0..20 {
            for i in 0..8 {
                let n0 = x[[r, 2 * i]].hypot(x[[r, 2 * i + 1]]);
                let n1 = y[[r, 2 * i]].hypot(y[[r, 2 * i + 1]]);
                assert!((n0 - n1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dot_product_depends_only_on_offset() {
        let mut rng = stream_rng(4, 0);
        let q = Array::from_shape_fn((1, 32), |_| rng.random_range(-1.0f64..1.0));
        let k = Array::from_shape_fn((1, 32), |_| rng.random_range(-1.0f64..1.0));
        let dot = |m: usize, n: usize| {
            let a = apply_rope(q.view(), &[m], 10_000.0).unwrap();
            let b = apply_rope(k.view(), &[n], 10_000.0).unwrap();
            (&a * &b).sum()
        };
        for offset in [0usize, 1, 7, 50] {
            let reference = dot(0, offset);
            for m in [3usize, 17, 120] {
                assert!((dot(m, m + offset) - reference).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn inverse_undoes_rotation() {
        let table = RopeTable::<f64>::new(10, 4, 10_000.0).unwrap();
        let x = Array::from_shape_fn((3, 8), |(i, j)| (i * 8 + j) as f64 * 0.1);
        let mut y = x.clone();
        table.rotate(y.view_mut(), &[2, 5, 9], false);
        table.rotate(y.view_mut(), &[2, 5, 9], true);
        assert!((&y - &x).iter().all(|v| v.abs() < 1e-12));
    }
}
