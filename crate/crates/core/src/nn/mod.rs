//! Minimal 3D convolutional layers with explicit backward passes.
//!
//! Activations are single-sample volumes laid out as `(C, T, H, W)`.
//! Every layer's `forward` returns the output together with whatever the
//! matching `backward` needs; gradients accumulate into a second instance
//! of the same layer type holding zeros.

mod conv;
mod inflate;
mod linear;
mod ops;
mod pool;

pub use conv::{Conv3d, Conv3dCache, Conv3dSpec};
pub use inflate::inflate_2d;
pub use linear::Linear;
pub use ops::{dropout_mask, relu, relu_backward};
pub use pool::{MaxPool3d, MaxPoolCache};

use ndarray::{ArrayViewD, ArrayViewMutD};

use crate::real::Real;

/// Named, ordered access to a module's trainable tensors.
pub trait Parameters<T: Real> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>));

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>));

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, a| n += a.len());
        n
    }

    /// Sets every parameter to zero; used to build gradient accumulators.
    fn fill_zero(&mut self) {
        self.visit_mut("", &mut |_, mut a| a.fill(T::zero()));
    }

    fn named(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, a| out.push((n, a)));
        out
    }

    fn named_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, T>)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |n, a| out.push((n, a)));
        out
    }

    /// Elementwise `self += other` over matching parameters.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let src = other.named();
        let mut i = 0;
        self.visit_mut("", &mut |_, mut a| {
            a += &src[i].1;
            i += 1;
        });
    }

    fn scale(&mut self, factor: T) {
        self.visit_mut("", &mut |_, mut a| a.mapv_inplace(|v| v * factor));
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
