use ndarray::{Array4, ArrayView4};

use crate::error::{Error, Result};
use crate::real::Real;

/// Max pooling over (T, H, W); padded cells never win.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool3d {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    /// Flat input offset of the winning element for every output element.
    argmax: Vec<usize>,
    in_shape: (usize, usize, usize, usize),
}

impl MaxPool3d {
    pub fn same(k: usize) -> Self {
        Self {
            kernel: [k; 3],
            stride: [1; 3],
            padding: [k / 2; 3],
        }
    }

    pub fn forward<T: Real>(&self, x: ArrayView4<'_, T>) -> Result<(Array4<T>, MaxPoolCache)> {
        let (c, t, h, w) = x.dim();
        let dims = [t, h, w];
        let mut out_dims = [0; 3];
        for a in 0..3 {
            if self.padding[a] >= self.kernel[a]
                || dims[a] + 2 * self.padding[a] < self.kernel[a]
                || self.stride[a] == 0
            {
                return Err(Error::Shape(format!(
                    "max pool axis {a} incompatible with input {}",
                    dims[a]
                )));
            }
            out_dims[a] = (dims[a] + 2 * self.padding[a] - self.kernel[a]) / self.stride[a] + 1;
        }
        let [to, ho, wo] = out_dims;
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = Array4::<T>::zeros((c, to, ho, wo));
        let mut argmax = Vec::with_capacity(out.len());
        let os = out.as_slice_mut().expect("fresh array");
        let mut o = 0;
        for ci in 0..c {
            for ot in 0..to {
                for oh in 0..ho {
                    for ow in 0..wo {
                        let mut best = T::neg_infinity();
                        let mut best_at = usize::MAX;
                        for dt in 0..self.kernel[0] {
                            let it = (ot * self.stride[0] + dt) as isize - self.padding[0] as isize;
                            if it < 0 || it >= t as isize {
                                continue;
                            }
                            for dh in 0..self.kernel[1] {
                                let ih = (oh * self.stride[1] + dh) as isize - self.padding[1] as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                for dw in 0..self.kernel[2] {
                                    let iw = (ow * self.stride[2] + dw) as isize - self.padding[2] as isize;
                                    if iw < 0 || iw >= w as isize {
                                        continue;
                                    }
                                    let at = ((ci * t + it as usize) * h + ih as usize) * w + iw as usize;
                                    if best_at == usize::MAX || xs[at] > best {
                                        best = xs[at];
                                        best_at = at;
                                    }
                                }
                            }
                        }
                        os[o] = best;
                        argmax.push(best_at);
                        o += 1;
                    }
                }
            }
        }
        Ok((
            out,
            MaxPoolCache {
                argmax,
                in_shape: (c, t, h, w),
            },
        ))
    }

    pub fn backward<T: Real>(&self, cache: &MaxPoolCache, dout: ArrayView4<'_, T>) -> Array4<T> {
        let mut dx = Array4::<T>::zeros(cache.in_shape);
        let dxs = dx.as_slice_mut().expect("fresh array");
        for (&at, &g) in cache.argmax.iter().zip(dout.iter()) {
            dxs[at] += g;
        }
        dx
    }
}
