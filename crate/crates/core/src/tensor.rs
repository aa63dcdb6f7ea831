//! Scalar abstraction and the few dense-matrix helpers the model needs.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, LinalgScalar, ScalarOperand};
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Floating-point element type of model weights and activations.
pub trait Real:
    LinalgScalar
    + Float
    + ScalarOperand
    + Send
    + Sync
    + Debug
    + Display
    + Default
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    const DTYPE: &'static str;

    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
    /// Round to the nearest bfloat16 value (ties to even).
    fn round_bf16(self) -> Self;
}

impl Real for f32 {
    const DTYPE: &'static str = "f32";

    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn round_bf16(self) -> Self {
        if !self.is_finite() {
            return self;
        }
        let bits = self.to_bits();
        let rounded = bits.wrapping_add(0x7fff + ((bits >> 16) & 1)) & 0xffff_0000;
        f32::from_bits(rounded)
    }
}

impl Real for f64 {
    const DTYPE: &'static str = "f64";

    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
    #[inline]
    fn round_bf16(self) -> Self {
        (self as f32).round_bf16() as f64
    }
}

/// Arithmetic used for forward-pass matrix products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// Products in the storage type.
    #[default]
    Full,
    /// Operands rounded to bfloat16 before each product; weights, gradients
    /// and accumulation stay in the storage type.
    Bf16,
}

/// `a · b` under the given precision.
pub fn matmul<F: Real>(a: ArrayView2<F>, b: ArrayView2<F>, precision: Precision) -> Array2<F> {
    match precision {
        Precision::Full => a.dot(&b),
        Precision::Bf16 => {
            let a = a.mapv(F::round_bf16);
            let b = b.mapv(F::round_bf16);
            a.dot(&b)
        }
    }
}

/// `c += a · b`.
#[inline]
pub fn matmul_acc<F: Real>(c: &mut ArrayViewMut2<F>, a: ArrayView2<F>, b: ArrayView2<F>) {
    general_mat_mul(F::one(), &a, &b, F::one(), c);
}

/// Numerically stable in-place softmax of each row, optionally masking
/// columns where `mask` is true. Fully masked rows become zero.
pub fn softmax_rows<F: Real>(mut x: ArrayViewMut2<F>, mask: Option<&[bool]>) {
    for mut row in x.rows_mut() {
        let mut max = F::neg_infinity();
        for (j, &v) in row.iter().enumerate() {
            if mask.is_some_and(|m| m[j]) {
                continue;
            }
            if v > max {
                max = v;
            }
        }
        if max == F::neg_infinity() {
            row.fill(F::zero());
            continue;
        }
        let mut sum = F::zero();
        for (j, v) in row.iter_mut().enumerate() {
            if mask.is_some_and(|m| m[j]) {
                *v = F::zero();
            } else {
                *v = (*v - max).exp();
                sum += *v;
            }
        }
        let inv = F::one() / sum;
        row.mapv_inplace(|v| v * inv);
    }
}

/// Log-sum-exp of a slice.
pub fn log_sum_exp<F: Real>(xs: impl Iterator<Item = F> + Clone) -> F {
    let max = xs.clone().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return max;
    }
    let s: F = xs.map(|v| (v - max).exp()).sum();
    max + s.ln()
}
