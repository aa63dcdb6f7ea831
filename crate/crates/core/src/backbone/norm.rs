use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use crate::tensor::Real;

/// Row-wise RMS normalization: `x / sqrt(mean(x²) + eps) * gain`.
///
/// Returns the output and the per-row inverse RMS needed by the backward pass.
pub fn rms_norm<F: Real>(x: ArrayView2<F>, gain: ArrayView1<F>, eps: f64) -> (Array2<F>, Array1<F>) {
    let d = F::of(x.ncols() as f64);
    let eps = F::of(eps);
    let inv_rms: Array1<F> = x
        .rows()
        .into_iter()
        .map(|row| {
            let ms = row.iter().map(|&v| v * v).sum::<F>() / d;
            F::one() / (ms + eps).sqrt()
        })
        .collect();
    let mut y = x.to_owned();
    Zip::from(y.rows_mut()).and(&inv_rms).for_each(|mut row, &r| {
        Zip::from(&mut row).and(&gain).for_each(|v, &g| *v = *v * r * g);
    });
    (y, inv_rms)
}

/// Backward of [`rms_norm`]: returns `dx` and accumulates `dgain`.
pub fn rms_norm_backward<F: Real>(
    x: ArrayView2<F>,
    inv_rms: &Array1<F>,
    gain: ArrayView1<F>,
    dy: ArrayView2<F>,
    dgain: &mut Array1<F>,
) -> Array2<F> {
    let d = F::of(x.ncols() as f64);
    let mut dx = Array2::zeros(x.raw_dim());
    for (((xr, dyr), mut dxr), &r) in x
        .axis_iter(Axis(0))
        .zip(dy.axis_iter(Axis(0)))
        .zip(dx.axis_iter_mut(Axis(0)))
        .zip(inv_rms)
    {
        let mut dot = F::zero();
        for ((&xv, &dyv), (&g, dg)) in xr.iter().zip(&dyr).zip(gain.iter().zip(dgain.iter_mut())) {
            dot += dyv * g * xv;
            *dg += dyv * xv * r;
        }
        let c = r * r * dot / d;
        for ((dxv, &xv), (&dyv, &g)) in dxr.iter_mut().zip(&xr).zip(dyr.iter().zip(&gain)) {
            *dxv = r * (dyv * g - xv * c);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::Rng;

    use crate::rng::stream_rng;

    #[test]
    fn ones_vector() {
        let x = Array2::<f64>::ones((1, 8));
        let (y, _) = rms_norm(x.view(), Array1::ones(8).view(), 1e-5);
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!(y.iter().all(|&v| (v - expected).abs() < 1e-15));
    }

    #[test]
    fn scale_invariant() {
        let x = array![[0.3f64, -1.2, 2.0, 0.7]];
        let g = array![1.0, 0.5, 2.0, -1.0];
        let (a, _) = rms_norm(x.view(), g.view(), 1e-5);
        let (b, _) = rms_norm((&x * 2.0).view(), g.view(), 1e-5);
        assert!((&a - &b).iter().all(|v| v.abs() < 1e-5));
    }

    #[test]
    fn output_rms_equals_gain_rms() {
        // With a constant gain g the output RMS is g·sqrt(ms/(ms+eps)).
        let mut rng = stream_rng(1, 0);
        let x = Array::from_shape_fn((5, 64), |_| rng.random_range(-2.0f64..2.0));
        let g = Array1::from_elem(64, 1.7);
        let (y, _) = rms_norm(x.view(), g.view(), 1e-5);
        for row in y.rows() {
            let rms = (row.iter().map(|v| v * v).sum::<f64>() / 64.0).sqrt();
            assert!((rms - 1.7).abs() < 1e-4);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = stream_rng(2, 0);
        let x = Array::from_shape_fn((3, 6), |_| rng.random_range(-1.0f64..1.0));
        let g = Array::from_shape_fn(6, |_| rng.random_range(0.5f64..1.5));
        let w = Array::from_shape_fn((3, 6), |_| rng.random_range(-1.0f64..1.0));
        let loss = |x: &Array2<f64>, g: &Array1<f64>| (rms_norm(x.view(), g.view(), 1e-5).0 * &w).sum();
        let (_, inv) = rms_norm(x.view(), g.view(), 1e-5);
        let mut dg = Array1::zeros(6);
        let dx = rms_norm_backward(x.view(), &inv, g.view(), w.view(), &mut dg);
        let h = 1e-6;
        for i in 0..3 {
            for j in 0..6 {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[[i, j]] += h;
                xm[[i, j]] -= h;
                let fd = (loss(&xp, &g) - loss(&xm, &g)) / (2.0 * h);
                assert!((fd - dx[[i, j]]).abs() < 1e-8);
            }
        }
        for j in 0..6 {
            let (mut gp, mut gm) = (g.clone(), g.clone());
            gp[j] += h;
            gm[j] -= h;
            let fd = (loss(&x, &gp) - loss(&x, &gm)) / (2.0 * h);
            assert!((fd - dg[j]).abs() < 1e-8);
        }
    }
}
