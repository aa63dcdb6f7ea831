use ndarray::{ArrayView2, ArrayView3, Axis};

use crate::cipher::SymbolId;
use crate::tensor::{log_sum_exp, Real};

/// Mean cross-entropy over all non-pad positions, spaces and punctuation
/// included. `position_logits` is `[batch × len × classes]`.
pub fn cross_entropy<F: Real>(
    position_logits: ArrayView3<F>,
    targets: ArrayView2<SymbolId>,
    pad_mask: ArrayView2<bool>,
) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for ((logits, target), mask) in position_logits
        .axis_iter(Axis(0))
        .zip(targets.axis_iter(Axis(0)))
        .zip(pad_mask.axis_iter(Axis(0)))
    {
        for ((row, &t), &m) in logits.axis_iter(Axis(0)).zip(&target).zip(&mask) {
            if m {
                continue;
            }
            total += (log_sum_exp(row.iter().copied()) - row[t as usize]).f64();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
