use ndarray::ArrayD;

use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::real::{lit, Real};

/// One momentum-SGD update on flat slices:
/// `g' = g + wd·p; buf = momentum·buf + g'; p -= lr·buf`.
pub fn sgd_update<T: Real>(param: &mut [T], grad: &[T], buf: &mut [T], lr: f64, momentum: f64, weight_decay: f64) {
    let (lr, mu, wd) = (lit::<T>(lr), lit::<T>(momentum), lit::<T>(weight_decay));
    for ((p, &g), b) in param.iter_mut().zip(grad).zip(buf.iter_mut()) {
        let g = g + wd * *p;
        *b = mu * *b + g;
        *p -= lr * *b;
    }
}

/// Momentum SGD with L2 weight decay; one buffer per named parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: Vec<(String, ArrayD<T>)>,
}

impl<T: Real> Sgd<T> {
    pub fn new<P: Parameters<T>>(params: &P, momentum: f64, weight_decay: f64) -> Self {
        let buffers = params
            .named()
            .into_iter()
            .map(|(n, a)| (n, ArrayD::zeros(a.shape())))
            .collect();
        Self {
            momentum,
            weight_decay,
            buffers,
        }
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &ArrayD<T>)> {
        self.buffers.iter().map(|(n, b)| (n.as_str(), b))
    }

    pub fn buffers_mut(&mut self) -> impl Iterator<Item = (&str, &mut ArrayD<T>)> {
        self.buffers.iter_mut().map(|(n, b)| (n.as_str(), b))
    }

    /// Applies one step. Parameters whose name starts with any prefix in
    /// `frozen` are left untouched. Fails without modifying anything if a
    /// gradient is not finite.
    pub fn step<P: Parameters<T>>(&mut self, params: &mut P, grads: &P, lr: f64, frozen: &[String]) -> Result<()> {
        let grads = grads.named();
        if grads.len() != self.buffers.len() {
            return Err(Error::Shape("gradient set does not match optimizer state".into()));
        }
        for (name, g) in &grads {
            if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {name} at flat index {bad} is {}",
                    g.as_slice().map_or(T::nan(), |s| s[bad])
                )));
            }
        }
        let mut params = params.named_mut();
        for ((pname, p), ((gname, g), (bname, buf))) in params.iter_mut().zip(grads.iter().zip(self.buffers.iter_mut()))
        {
            if pname != gname || pname != bname || p.shape() != g.shape() || p.shape() != buf.shape() {
                return Err(Error::Shape(format!(
                    "parameter {pname} does not line up with {gname}/{bname}"
                )));
            }
            if frozen.iter().any(|f| pname.starts_with(f.as_str())) {
                continue;
            }
            let p = p.as_slice_mut().expect("contiguous parameter");
            let g = g.as_slice().expect("contiguous gradient");
            let b = buf.as_slice_mut().expect("contiguous buffer");
            sgd_update(p, g, b, lr, self.momentum, self.weight_decay);
        }
        Ok(())
    }
}
