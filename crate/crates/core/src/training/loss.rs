use ndarray::{Array1, Array3, ArrayView1, ArrayView3};

use crate::attention::attention_loss;
use crate::backbone::softmax;
use crate::dataset::GestureLabel;
use crate::error::{Error, Result};
use crate::real::{lit, Real};

/// Softmax cross-entropy of `logits` against class `target`, with its
/// gradient.
pub fn cross_entropy<T: Real>(logits: ArrayView1<'_, T>, target: usize) -> (T, Array1<T>) {
    let p = softmax(logits);
    let loss = -(p[target].max(T::min_positive_value())).ln();
    let mut grad = p;
    grad[target] -= T::one();
    (loss, grad)
}

#[derive(Debug, Clone)]
pub struct LossParts<T> {
    pub ce: T,
    pub attn: T,
    pub total: T,
    pub d_logits: Array1<T>,
    pub d_attention: Array3<T>,
}

/// `CE(logits, label) + λ · attention_loss(A, G)` with gradients.
pub fn total_loss<T: Real>(
    logits: ArrayView1<'_, T>,
    label: GestureLabel,
    attention: ArrayView3<'_, T>,
    gaze: ArrayView3<'_, T>,
    lambda: f64,
) -> Result<LossParts<T>> {
    let target = label
        .class_index()
        .filter(|&c| c < logits.len())
        .ok_or_else(|| Error::Validation(format!("{label} is not a trainable class for {} logits", logits.len())))?;
    let (ce, d_logits) = cross_entropy(logits, target);
    let (attn, mut d_attention) = if lambda > 0.0 {
        attention_loss(attention, gaze)?
    } else {
        (T::zero(), Array3::zeros(attention.dim()))
    };
    let lam = lit::<T>(lambda);
    d_attention.mapv_inplace(|v| v * lam);
    Ok(LossParts {
        ce,
        attn,
        total: ce + lam * attn,
        d_logits,
        d_attention,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits_give_ln_classes() {
        let (l, g) = cross_entropy(array![0.0f64, 0.0, 0.0, 0.0].view(), 2);
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((l - 1.3863).abs() < 1e-4);
        assert!((g.sum()).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_is_pure_cross_entropy() {
        let logits = array![0.3f64, -1.0, 2.0, 0.1];
        let a = Array3::from_elem((2, 3, 3), 0.5);
        let mut g = Array3::zeros((2, 3, 3));
        g[[0, 0, 0]] = 1.0;
        g[[1, 2, 2]] = 1.0;
        let parts = total_loss(logits.view(), GestureLabel::G3, a.view(), g.view(), 0.0).unwrap();
        assert_eq!(parts.total, cross_entropy(logits.view(), 2).0);
        assert!(parts.d_attention.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perfect_prediction_and_matching_attention_vanish() {
        let logits = array![40.0f64, 0.0, 0.0, 0.0];
        let mut g = Array3::from_shape_fn((2, 3, 3), |(t, i, j)| (1 + t + i * j) as f64);
        for mut t in g.outer_iter_mut() {
            let s = t.sum();
            t /= s;
        }
        let a = g.mapv(|v| v * 3.0);
        let parts = total_loss(logits.view(), GestureLabel::G1, a.view(), g.view(), 1.0).unwrap();
        assert!(parts.total <= 1e-5, "{}", parts.total);
    }

    #[test]
    fn unlabeled_target_is_rejected() {
        let logits = array![0.0f32, 0.0];
        let a = Array3::<f32>::zeros((1, 2, 2));
        assert!(total_loss(logits.view(), GestureLabel::Unlabeled, a.view(), a.view(), 1.0).is_err());
        assert!(total_loss(logits.view(), GestureLabel::G3, a.view(), a.view(), 1.0).is_err());
    }

    #[test]
    fn monotone_in_lambda() {
        let logits = array![0.2f64, 0.1];
        let a = Array3::from_shape_fn((1, 3, 3), |(_, i, j)| (i + j) as f64 / 4.0);
        let mut g = Array3::zeros((1, 3, 3));
        g[[0, 0, 0]] = 1.0;
        let mut prev = f64::MIN;
        for lam in [0.0, 0.5, 1.0, 4.0] {
            let l = total_loss(logits.view(), GestureLabel::G2, a.view(), g.view(), lam)
                .unwrap()
                .total;
            assert!(l >= prev);
            prev = l;
        }
    }
}
