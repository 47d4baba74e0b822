use ndarray::{Array1, Array2, ArrayView1, ArrayViewD, ArrayViewMutD};
use rand::Rng;

use super::{join, Parameters};
use crate::error::{Error, Result};
use crate::real::{lit, Real};

/// Affine map `y = W x + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(inputs, outputs);
        let bound = (1.0 / inputs as f64).sqrt();
        l.weight.mapv_inplace(|_| lit(rng.random_range(-bound..bound)));
        l
    }

    pub fn forward(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if x.len() != self.weight.ncols() {
            return Err(Error::Shape(format!(
                "linear expects {} inputs, got {}",
                self.weight.ncols(),
                x.len()
            )));
        }
        Ok(self.weight.dot(&x) + &self.bias)
    }

    pub fn backward(&self, x: ArrayView1<'_, T>, dout: ArrayView1<'_, T>, grad: &mut Linear<T>) -> Array1<T> {
        for (mut row, &g) in grad.weight.rows_mut().into_iter().zip(dout.iter()) {
            row.scaled_add(g, &x);
        }
        grad.bias += &dout;
        self.weight.t().dot(&dout)
    }
}

impl<T: Real> Parameters<T> for Linear<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        f(join(prefix, "weight"), self.weight.view().into_dyn());
        f(join(prefix, "bias"), self.bias.view().into_dyn());
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        f(join(prefix, "weight"), self.weight.view_mut().into_dyn());
        f(join(prefix, "bias"), self.bias.view_mut().into_dyn());
    }
}
