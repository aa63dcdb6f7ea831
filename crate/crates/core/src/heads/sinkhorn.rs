//! Sinkhorn normalization and its Gumbel-perturbed relaxation.
//!
//! One iteration normalizes rows, then columns. Training runs in the log
//! domain, which stays finite for any temperature.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::log_sum_exp;

pub const DEFAULT_TAU: f64 = 4.75;
pub const DEFAULT_ITERS: usize = 6;
/// Uniform draws are clamped to `[EPS, 1 - EPS]` before the double log.
pub const GUMBEL_EPS: f64 = 1e-10;

/// Nonnegative square matrix with (approximately) unit row and column sums.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublyStochasticMatrix {
    values: Array2<f64>,
}

impl DoublyStochasticMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Largest absolute deviation of any row or column sum from 1.
    pub fn max_deviation(&self) -> f64 {
        sum_deviation(self.values.view())
    }
}

pub fn sum_deviation(m: ArrayView2<f64>) -> f64 {
    let rows = m.sum_axis(Axis(1)).iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let cols = m.sum_axis(Axis(0)).iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    rows.max(cols)
}

/// `exp(X)` followed by `iters` rounds of row then column normalization.
pub fn sinkhorn(x: ArrayView2<f64>, iters: usize) -> DoublyStochasticMatrix {
    // Shifting by the max is absorbed by the first normalization.
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = x.mapv(|v| (v - max).exp());
    for _ in 0..iters {
        for mut row in s.rows_mut() {
            let t = row.sum();
            row.mapv_inplace(|v| v / t);
        }
        for mut col in s.columns_mut() {
            let t = col.sum();
            col.mapv_inplace(|v| v / t);
        }
    }
    DoublyStochasticMatrix { values: s }
}

/// Log-domain Sinkhorn with the intermediate results kept for backprop.
#[derive(Debug, Clone)]
pub struct LogSinkhorn {
    /// Output of every half-step; the last entry is the result.
    trace: Vec<Array2<f64>>,
    input: Array2<f64>,
}

impl LogSinkhorn {
    pub fn run(z: ArrayView2<f64>, iters: usize) -> Self {
        let mut trace = Vec::with_capacity(2 * iters);
        let mut cur = z.to_owned();
        for _ in 0..iters {
            for axis in [Axis(1), Axis(0)] {
                normalize_log(&mut cur, axis);
                trace.push(cur.clone());
            }
        }
        Self { trace, input: z.to_owned() }
    }

    /// Log of the resulting (approximately) doubly stochastic matrix.
    pub fn output(&self) -> &Array2<f64> {
        self.trace.last().unwrap_or(&self.input)
    }

    pub fn backward(&self, dout: ArrayView2<f64>) -> Array2<f64> {
        let mut d = dout.to_owned();
        for (k, y) in self.trace.iter().enumerate().rev() {
            // Even half-steps normalized rows, odd ones columns.
            let axis = if k % 2 == 0 { Axis(1) } else { Axis(0) };
            let sums = d.sum_axis(axis);
            for (mut lane, (y_lane, &s)) in d.lanes_mut(axis).into_iter().zip(y.lanes(axis).into_iter().zip(&sums)) {
                lane.zip_mut_with(&y_lane, |g, &yv| *g -= yv.exp() * s);
            }
        }
        d
    }
}

/// Subtract the log-sum-exp along `axis` (1 = within each row).
fn normalize_log(m: &mut Array2<f64>, axis: Axis) {
    for mut lane in m.lanes_mut(axis) {
        let lse = log_sum_exp(lane.iter().copied());
        lane.mapv_inplace(|v| v - lse);
    }
}

/// Standard Gumbel noise `-ln(-ln u)`.
pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        let u: f64 = rng.random::<f64>().clamp(GUMBEL_EPS, 1.0 - GUMBEL_EPS);
        -(-u.ln()).ln()
    })
}

/// Temperature and iteration count of the Gumbel-Sinkhorn relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelSinkhorn {
    pub tau: f64,
    pub iters: usize,
}

impl Default for GumbelSinkhorn {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU, iters: DEFAULT_ITERS }
    }
}

impl GumbelSinkhorn {
    pub fn new(tau: f64, iters: usize) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::NonPositiveTemperature(tau));
        }
        Ok(Self { tau, iters })
    }

    /// Log soft permutation `log S((X + noise) / tau)`.
    pub fn forward(&self, x: ArrayView2<f64>, noise: Option<&Array2<f64>>) -> LogSinkhorn {
        let mut z = x.to_owned();
        if let Some(g) = noise {
            z += g;
        }
        z.mapv_inplace(|v| v / self.tau);
        LogSinkhorn::run(z.view(), self.iters)
    }

    /// Gradient with respect to `X` given the gradient of the log output.
    pub fn backward(&self, run: &LogSinkhorn, dlog: ArrayView2<f64>) -> Array2<f64> {
        run.backward(dlog) / self.tau
    }
}

/// Sample a soft permutation: Gumbel noise (when `rng` is given), scale by
/// `1/tau`, Sinkhorn-normalize.
pub fn gumbel_sinkhorn<R: Rng + ?Sized>(
    x: ArrayView2<f64>,
    tau: f64,
    iters: usize,
    rng: Option<&mut R>,
) -> Result<DoublyStochasticMatrix> {
    let gs = GumbelSinkhorn::new(tau, iters)?;
    let noise = rng.map(|r| gumbel_noise(r, x.nrows(), x.ncols()));
    let run = gs.forward(x, noise.as_ref());
    Ok(DoublyStochasticMatrix { values: run.output().mapv(f64::exp) })
}
