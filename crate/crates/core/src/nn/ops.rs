use ndarray::{Array, Array1, ArrayView, Dimension};
use rand::Rng;

use crate::real::Real;

pub fn relu<T: Real, D: Dimension>(x: Array<T, D>) -> Array<T, D> {
    x.mapv_into(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its output.
pub fn relu_backward<T: Real, D: Dimension>(out: ArrayView<'_, T, D>, dout: Array<T, D>) -> Array<T, D> {
    let mut d = dout;
    d.zip_mut_with(&out, |g, &y| {
        if y <= T::zero() {
            *g = T::zero();
        }
    });
    d
}

/// Inverted dropout mask: kept units carry `1/(1-rate)`, dropped units 0.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Array1<T> {
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    Array1::from_shape_fn(len, |_| if rng.random::<f64>() < rate { T::zero() } else { keep })
}
