use ndarray::{linalg::general_mat_mul, Array1, Array2, Array4, Array5, ArrayView4, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;

use super::{join, Parameters};
use crate::error::{Error, Result};
use crate::real::{lit, Real};

/// Geometry of a 3D convolution, axes ordered (T, H, W).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv3dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Conv3dSpec {
    pub fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: [1, 1, 1],
            stride: [1, 1, 1],
            padding: [0, 0, 0],
        }
    }

    /// Cubic kernel `k` with "same" padding and unit stride.
    pub fn same(in_channels: usize, out_channels: usize, k: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: [k; 3],
            stride: [1; 3],
            padding: [k / 2; 3],
        }
    }

    pub fn output_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if padded < self.kernel[a] || self.stride[a] == 0 {
                return Err(Error::Shape(format!(
                    "conv axis {a}: input {} (padding {}) smaller than kernel {}",
                    input[a], self.padding[a], self.kernel[a]
                )));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1] && self.padding == [0, 0, 0]
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel.iter().product::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d<T> {
    pub spec: Conv3dSpec,
    /// `(C_out, C_in, kT, kH, kW)`
    pub weight: Array5<T>,
    pub bias: Array1<T>,
}

/// Unfolded input patches `(C_in·kT·kH·kW, T_out·H_out·W_out)`.
#[derive(Debug, Clone)]
pub struct Conv3dCache<T> {
    cols: Array2<T>,
    in_dims: [usize; 3],
    out_dims: [usize; 3],
}

impl<T: Real> Conv3d<T> {
    pub fn zeros(spec: Conv3dSpec) -> Self {
        let [kt, kh, kw] = spec.kernel;
        Self {
            spec,
            weight: Array5::zeros((spec.out_channels, spec.in_channels, kt, kh, kw)),
            bias: Array1::zeros(spec.out_channels),
        }
    }

    /// Uniform fan-in initialization, zero bias.
    pub fn init<R: Rng + ?Sized>(spec: Conv3dSpec, rng: &mut R) -> Self {
        let mut conv = Self::zeros(spec);
        let bound = (6.0 / spec.patch_len() as f64).sqrt();
        conv.weight.mapv_inplace(|_| lit(rng.random_range(-bound..bound)));
        conv
    }

    pub fn from_parts(spec: Conv3dSpec, weight: Array5<T>, bias: Array1<T>) -> Result<Self> {
        let [kt, kh, kw] = spec.kernel;
        if weight.dim() != (spec.out_channels, spec.in_channels, kt, kh, kw) || bias.len() != spec.out_channels {
            return Err(Error::Shape(format!(
                "conv weight {:?} / bias {} do not match {spec:?}",
                weight.shape(),
                bias.len()
            )));
        }
        Ok(Self { spec, weight, bias })
    }

    pub fn forward(&self, x: ArrayView4<'_, T>) -> Result<(Array4<T>, Conv3dCache<T>)> {
        let (c, t, h, w) = x.dim();
        if c != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.spec.in_channels
            )));
        }
        let in_dims = [t, h, w];
        let out_dims = self.spec.output_dims(in_dims)?;
        let cols = self.unfold(x, in_dims, out_dims);
        let p = cols.ncols();
        let co = self.spec.out_channels;
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((co, self.spec.patch_len()))
            .expect("contiguous weight");
        let mut out = Array2::<T>::zeros((co, p));
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.iter()) {
            row.fill(b);
        }
        general_mat_mul(T::one(), &w2, &cols, T::one(), &mut out);
        let out = out
            .into_shape_with_order((co, out_dims[0], out_dims[1], out_dims[2]))
            .expect("output reshape");
        Ok((
            out,
            Conv3dCache {
                cols,
                in_dims,
                out_dims,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and returns the input
    /// gradient when `need_input_grad` is set.
    pub fn backward(
        &self,
        cache: &Conv3dCache<T>,
        dout: ArrayView4<'_, T>,
        grad: &mut Conv3d<T>,
        need_input_grad: bool,
    ) -> Option<Array4<T>> {
        let co = self.spec.out_channels;
        let k = self.spec.patch_len();
        let p: usize = cache.out_dims.iter().product();
        let dout2 = dout
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((co, p))
            .expect("dout reshape");
        {
            let mut gw = grad
                .weight
                .view_mut()
                .into_shape_with_order((co, k))
                .expect("contiguous grad weight");
            general_mat_mul(T::one(), &dout2, &cache.cols.t(), T::one(), &mut gw);
        }
        grad.bias += &dout2.sum_axis(Axis(1));
        if !need_input_grad {
            return None;
        }
        let w2 = self
            .weight
            .view()
            .into_shape_with_order((co, k))
            .expect("contiguous weight");
        let mut dcols = Array2::<T>::zeros((k, p));
        general_mat_mul(T::one(), &w2.t(), &dout2, T::zero(), &mut dcols);
        Some(self.fold(&dcols, cache.in_dims, cache.out_dims))
    }

    fn unfold(&self, x: ArrayView4<'_, T>, in_dims: [usize; 3], out_dims: [usize; 3]) -> Array2<T> {
        let c = self.spec.in_channels;
        let [t, h, w] = in_dims;
        let [to, ho, wo] = out_dims;
        let p = to * ho * wo;
        if self.spec.is_pointwise() {
            return x
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order((c, p))
                .expect("pointwise reshape");
        }
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let [kt, kh, kw] = self.spec.kernel;
        let [st, sh, sw] = self.spec.stride;
        let [pt, ph, pw] = self.spec.padding;
        let mut cols = Array2::<T>::zeros((c * kt * kh * kw, p));
        let cs = cols.as_slice_mut().expect("fresh array");
        let mut row = 0;
        for ci in 0..c {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let dst = &mut cs[row * p..(row + 1) * p];
                        row += 1;
                        for ot in 0..to {
                            let it = (ot * st + dt) as isize - pt as isize;
                            if it < 0 || it >= t as isize {
                                continue;
                            }
                            for oh in 0..ho {
                                let ih = (oh * sh + dh) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                let src_base = ((ci * t + it as usize) * h + ih as usize) * w;
                                let dst_base = (ot * ho + oh) * wo;
                                for ow in 0..wo {
                                    let iw = (ow * sw + dw) as isize - pw as isize;
                                    if iw >= 0 && iw < w as isize {
                                        dst[dst_base + ow] = xs[src_base + iw as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn fold(&self, dcols: &Array2<T>, in_dims: [usize; 3], out_dims: [usize; 3]) -> Array4<T> {
        let c = self.spec.in_channels;
        let [t, h, w] = in_dims;
        if self.spec.is_pointwise() {
            return dcols
                .clone()
                .into_shape_with_order((c, t, h, w))
                .expect("pointwise reshape");
        }
        let [to, ho, wo] = out_dims;
        let p = to * ho * wo;
        let [kt, kh, kw] = self.spec.kernel;
        let [st, sh, sw] = self.spec.stride;
        let [pt, ph, pw] = self.spec.padding;
        let mut dx = Array4::<T>::zeros((c, t, h, w));
        let dxs = dx.as_slice_mut().expect("fresh array");
        let ds = dcols.as_slice().expect("standard layout");
        let mut row = 0;
        for ci in 0..c {
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let src = &ds[row * p..(row + 1) * p];
                        row += 1;
                        for ot in 0..to {
                            let it = (ot * st + dt) as isize - pt as isize;
                            if it < 0 || it >= t as isize {
                                continue;
                            }
                            for oh in 0..ho {
                                let ih = (oh * sh + dh) as isize - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                let dst_base = ((ci * t + it as usize) * h + ih as usize) * w;
                                let src_base = (ot * ho + oh) * wo;
                                for ow in 0..wo {
                                    let iw = (ow * sw + dw) as isize - pw as isize;
                                    if iw >= 0 && iw < w as isize {
                                        dxs[dst_base + iw as usize] += src[src_base + ow];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

impl<T: Real> Parameters<T> for Conv3d<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        f(join(prefix, "weight"), self.weight.view().into_dyn());
        f(join(prefix, "bias"), self.bias.view().into_dyn());
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        f(join(prefix, "weight"), self.weight.view_mut().into_dyn());
        f(join(prefix, "bias"), self.bias.view_mut().into_dyn());
    }
}
