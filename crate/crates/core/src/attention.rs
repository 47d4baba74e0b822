//! Gaze-supervised spatio-temporal attention.
//!
//! Four inception-style 3D branches see the feature volume, their outputs
//! are concatenated and reduced to one channel by a pointwise head, and the
//! single-channel response is min-max scaled into `[0, 1]`. The resulting
//! map reweights the feature volume residually: `X' = X · (1 + A)`.

use ndarray::{concatenate, s, Array3, Array4, ArrayView3, ArrayView4, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{join, Conv3d, Conv3dCache, Conv3dSpec, MaxPool3d, MaxPoolCache, Parameters};
use crate::real::{lit, Real};

/// Smoothing added to attention values before they are normalized into a
/// distribution for the supervision loss.
pub const ATTENTION_LOSS_EPS: f64 = 1e-8;

/// Scope over which the scale function takes its min and max.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleScope {
    /// One min/max over the whole `T×H×W` response.
    #[default]
    Volume,
    /// Separate min/max per timestamp.
    PerTimestamp,
}

impl std::str::FromStr for ScaleScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volume" => Ok(ScaleScope::Volume),
            "timestamp" | "per_timestamp" => Ok(ScaleScope::PerTimestamp),
            other => Err(Error::Config(format!("unknown scale scope {other:?}"))),
        }
    }
}

impl std::fmt::Display for ScaleScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScaleScope::Volume => "volume",
            ScaleScope::PerTimestamp => "timestamp",
        })
    }
}

/// Branch widths: outputs `w0..w3` and 3×3×3 reductions `r1`, `r2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionWidths {
    pub w0: usize,
    pub w1: usize,
    pub w2: usize,
    pub w3: usize,
    pub r1: usize,
    pub r2: usize,
}

impl Default for AttentionWidths {
    fn default() -> Self {
        Self {
            w0: 32,
            w1: 32,
            w2: 16,
            w3: 16,
            r1: 24,
            r2: 8,
        }
    }
}

impl AttentionWidths {
    pub fn concat_width(&self) -> usize {
        self.w0 + self.w1 + self.w2 + self.w3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionModule<T> {
    pub b0: Conv3d<T>,
    pub b1_reduce: Conv3d<T>,
    pub b1: Conv3d<T>,
    pub b2_reduce: Conv3d<T>,
    pub b2: Conv3d<T>,
    pub b3: Conv3d<T>,
    pub head: Conv3d<T>,
    pub pool: MaxPool3d,
    pub scope: ScaleScope,
}

pub struct AttentionCache<T> {
    b0: Conv3dCache<T>,
    b1_reduce: Conv3dCache<T>,
    b1: Conv3dCache<T>,
    b2_reduce: Conv3dCache<T>,
    b2: Conv3dCache<T>,
    pool: MaxPoolCache,
    b3: Conv3dCache<T>,
    head: Conv3dCache<T>,
    scaled: Array3<T>,
    scale: ScaleState,
}

/// Per-group (volume or timestamp) min/max positions and range.
struct ScaleState {
    groups: Vec<ScaleGroup>,
}

struct ScaleGroup {
    offset: usize,
    argmin: usize,
    argmax: usize,
    range: f64,
}

impl<T: Real> AttentionModule<T> {
    fn specs(in_channels: usize, w: AttentionWidths) -> [Conv3dSpec; 7] {
        [
            Conv3dSpec::pointwise(in_channels, w.w0),
            Conv3dSpec::pointwise(in_channels, w.r1),
            Conv3dSpec::same(w.r1, w.w1, 3),
            Conv3dSpec::pointwise(in_channels, w.r2),
            Conv3dSpec::same(w.r2, w.w2, 3),
            Conv3dSpec::pointwise(in_channels, w.w3),
            Conv3dSpec::pointwise(w.concat_width(), 1),
        ]
    }

    fn from_convs(convs: [Conv3d<T>; 7], scope: ScaleScope) -> Self {
        let [b0, b1_reduce, b1, b2_reduce, b2, b3, head] = convs;
        Self {
            b0,
            b1_reduce,
            b1,
            b2_reduce,
            b2,
            b3,
            head,
            pool: MaxPool3d::same(3),
            scope,
        }
    }

    pub fn zeros(in_channels: usize, widths: AttentionWidths, scope: ScaleScope) -> Self {
        Self::from_convs(Self::specs(in_channels, widths).map(Conv3d::zeros), scope)
    }

    pub fn init<R: Rng + ?Sized>(in_channels: usize, widths: AttentionWidths, scope: ScaleScope, rng: &mut R) -> Self {
        Self::from_convs(Self::specs(in_channels, widths).map(|s| Conv3d::init(s, rng)), scope)
    }

    pub fn in_channels(&self) -> usize {
        self.b0.spec.in_channels
    }

    /// Computes the attention map `A` of shape `(T, H, W)` for features `X`
    /// of shape `(C, T, H, W)`.
    pub fn forward(&self, x: ArrayView4<'_, T>) -> Result<(Array3<T>, AttentionCache<T>)> {
        if x.dim().0 != self.in_channels() {
            return Err(Error::Shape(format!(
                "attention expects {} channels, got {}",
                self.in_channels(),
                x.dim().0
            )));
        }
        let (y0, c0) = self.b0.forward(x)?;
        let (r1, c1r) = self.b1_reduce.forward(x)?;
        let (y1, c1) = self.b1.forward(r1.view())?;
        let (r2, c2r) = self.b2_reduce.forward(x)?;
        let (y2, c2) = self.b2.forward(r2.view())?;
        let (p3, cp) = self.pool.forward(x)?;
        let (y3, c3) = self.b3.forward(p3.view())?;
        let cat =
            concatenate(Axis(0), &[y0.view(), y1.view(), y2.view(), y3.view()]).expect("branches preserve (T, H, W)");
        let (resp, ch) = self.head.forward(cat.view())?;
        let resp = resp.index_axis_move(Axis(0), 0);
        let (scaled, scale) = minmax_forward(resp.view(), self.scope);
        let cache = AttentionCache {
            b0: c0,
            b1_reduce: c1r,
            b1: c1,
            b2_reduce: c2r,
            b2: c2,
            pool: cp,
            b3: c3,
            head: ch,
            scaled: scaled.clone(),
            scale,
        };
        Ok((scaled, cache))
    }

    /// Backpropagates `dA` and returns the gradient with respect to `X`.
    pub fn backward(&self, cache: &AttentionCache<T>, d_attention: ArrayView3<'_, T>, grad: &mut Self) -> Array4<T> {
        let d_resp = minmax_backward(cache.scaled.view(), &cache.scale, d_attention);
        let d_resp = d_resp.insert_axis(Axis(0));
        let d_cat = self
            .head
            .backward(&cache.head, d_resp.view(), &mut grad.head, true)
            .expect("input grad requested");
        let w = [
            self.b0.spec.out_channels,
            self.b1.spec.out_channels,
            self.b2.spec.out_channels,
            self.b3.spec.out_channels,
        ];
        let mut off = 0;
        let mut part = |n: usize| {
            let v = d_cat.slice(s![off..off + n, .., .., ..]);
            off += n;
            v
        };
        let (d0, d1, d2, d3) = (part(w[0]), part(w[1]), part(w[2]), part(w[3]));
        let mut dx = self.b0.backward(&cache.b0, d0, &mut grad.b0, true).expect("dx");
        let dr1 = self.b1.backward(&cache.b1, d1, &mut grad.b1, true).expect("dx");
        dx += &self
            .b1_reduce
            .backward(&cache.b1_reduce, dr1.view(), &mut grad.b1_reduce, true)
            .expect("dx");
        let dr2 = self.b2.backward(&cache.b2, d2, &mut grad.b2, true).expect("dx");
        dx += &self
            .b2_reduce
            .backward(&cache.b2_reduce, dr2.view(), &mut grad.b2_reduce, true)
            .expect("dx");
        let dp = self.b3.backward(&cache.b3, d3, &mut grad.b3, true).expect("dx");
        dx += &self.pool.backward(&cache.pool, dp.view());
        dx
    }
}

impl<T: Real> Parameters<T> for AttentionModule<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        self.b0.visit(&join(prefix, "b0"), f);
        self.b1_reduce.visit(&join(prefix, "b1_reduce"), f);
        self.b1.visit(&join(prefix, "b1"), f);
        self.b2_reduce.visit(&join(prefix, "b2_reduce"), f);
        self.b2.visit(&join(prefix, "b2"), f);
        self.b3.visit(&join(prefix, "b3"), f);
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        self.b0.visit_mut(&join(prefix, "b0"), f);
        self.b1_reduce.visit_mut(&join(prefix, "b1_reduce"), f);
        self.b1.visit_mut(&join(prefix, "b1"), f);
        self.b2_reduce.visit_mut(&join(prefix, "b2_reduce"), f);
        self.b2.visit_mut(&join(prefix, "b2"), f);
        self.b3.visit_mut(&join(prefix, "b3"), f);
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

/// `(v - min) / (max - min)` over the whole array; a constant input maps to
/// all zeros.
pub fn minmax_scale<T: Real>(v: &[T]) -> Vec<T> {
    let (lo, hi) = v.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    if v.is_empty() || !(hi > lo) {
        return vec![T::zero(); v.len()];
    }
    v.iter().map(|&x| (x - lo) / (hi - lo)).collect()
}

fn minmax_forward<T: Real>(resp: ArrayView3<'_, T>, scope: ScaleScope) -> (Array3<T>, ScaleState) {
    let resp = resp.as_standard_layout();
    let data = resp.as_slice().expect("standard layout");
    let (t, h, w) = resp.dim();
    let group_len = match scope {
        ScaleScope::Volume => t * h * w,
        ScaleScope::PerTimestamp => h * w,
    };
    let mut out = vec![T::zero(); data.len()];
    let mut groups = Vec::new();
    for (g, chunk) in data.chunks(group_len).enumerate() {
        let offset = g * group_len;
        let mut argmin = 0;
        let mut argmax = 0;
        for (i, &v) in chunk.iter().enumerate() {
            if v < chunk[argmin] {
                argmin = i;
            }
            if v > chunk[argmax] {
                argmax = i;
            }
        }
        let lo = chunk[argmin];
        let hi = chunk[argmax];
        let range = (hi - lo).to_f64().unwrap_or(0.0);
        if hi > lo {
            for (o, &v) in out[offset..offset + chunk.len()].iter_mut().zip(chunk) {
                *o = (v - lo) / (hi - lo);
            }
        }
        groups.push(ScaleGroup {
            offset,
            argmin,
            argmax,
            range,
        });
    }
    let out = Array3::from_shape_vec((t, h, w), out).expect("same length");
    (out, ScaleState { groups })
}

fn minmax_backward<T: Real>(scaled: ArrayView3<'_, T>, state: &ScaleState, dy: ArrayView3<'_, T>) -> Array3<T> {
    let dim = scaled.dim();
    let y = scaled.as_standard_layout();
    let y = y.as_slice().expect("standard layout");
    let dy = dy.as_standard_layout();
    let dy = dy.as_slice().expect("standard layout");
    let mut dv = vec![T::zero(); y.len()];
    let group_len = y.len() / state.groups.len().max(1);
    for g in &state.groups {
        if g.range <= 0.0 {
            continue;
        }
        let inv = T::one() / lit::<T>(g.range);
        let range = g.offset..g.offset + group_len;
        let mut to_max = T::zero();
        let mut to_min = T::zero();
        for ((d, &gy), &yy) in dv[range.clone()].iter_mut().zip(&dy[range.clone()]).zip(&y[range]) {
            *d = gy * inv;
            to_max -= gy * yy * inv;
            to_min += gy * (yy - T::one()) * inv;
        }
        dv[g.offset + g.argmax] += to_max;
        dv[g.offset + g.argmin] += to_min;
    }
    Array3::from_shape_vec(dim, dv).expect("same length")
}

/// Residual reweighting `X'[c,t,h,w] = X[c,t,h,w] · (1 + A[t,h,w])`.
pub fn apply_attention<T: Real>(x: ArrayView4<'_, T>, a: ArrayView3<'_, T>) -> Result<Array4<T>> {
    check_attention_shape(x, a)?;
    let mut out = x.to_owned();
    for mut channel in out.outer_iter_mut() {
        Zip::from(&mut channel).and(&a).for_each(|v, &w| *v *= T::one() + w);
    }
    Ok(out)
}

/// Gradients of [`apply_attention`] with respect to `X` and `A`.
pub fn apply_attention_backward<T: Real>(
    x: ArrayView4<'_, T>,
    a: ArrayView3<'_, T>,
    dout: ArrayView4<'_, T>,
) -> (Array4<T>, Array3<T>) {
    let mut dx = dout.to_owned();
    let mut da = Array3::<T>::zeros(a.dim());
    for (mut dxc, xc) in dx.outer_iter_mut().zip(x.outer_iter()) {
        Zip::from(&mut dxc)
            .and(&xc)
            .and(&a)
            .and(&mut da)
            .for_each(|g, &xv, &w, dav| {
                *dav += *g * xv;
                *g *= T::one() + w;
            });
    }
    (dx, da)
}

fn check_attention_shape<T: Real>(x: ArrayView4<'_, T>, a: ArrayView3<'_, T>) -> Result<()> {
    let (_, t, h, w) = x.dim();
    if a.dim() != (t, h, w) {
        return Err(Error::Shape(format!(
            "attention map {:?} does not match feature volume (T,H,W) = {:?}",
            a.shape(),
            (t, h, w)
        )));
    }
    Ok(())
}

/// Mean over timestamps of `KL(G_t ‖ Â_t)` with
/// `Â_t = (A_t + ε) / Σ(A_t + ε)`. Returns the loss and `dL/dA`.
pub fn attention_loss<T: Real>(a: ArrayView3<'_, T>, g: ArrayView3<'_, T>) -> Result<(T, Array3<T>)> {
    if a.dim() != g.dim() {
        return Err(Error::Shape(format!(
            "attention map {:?} vs gaze heatmap {:?}",
            a.shape(),
            g.shape()
        )));
    }
    let eps = lit::<T>(ATTENTION_LOSS_EPS);
    let steps = a.dim().0;
    let inv_t = T::one() / lit::<T>(steps.max(1) as f64);
    let mut loss = T::zero();
    let mut grad = Array3::<T>::zeros(a.dim());
    for ((at, gt), mut dt) in a.outer_iter().zip(g.outer_iter()).zip(grad.outer_iter_mut()) {
        let total: T = at.iter().map(|&v| v + eps).sum();
        let g_mass: T = gt.iter().copied().sum();
        let mut kl = T::zero();
        for ((&av, &gv), d) in at.iter().zip(gt.iter()).zip(dt.iter_mut()) {
            let q = (av + eps) / total;
            if gv > T::zero() {
                kl += gv * (gv / q).ln();
            }
            *d = inv_t * (g_mass / total - gv / (av + eps));
        }
        loss += kl * inv_t;
    }
    Ok((loss.max(T::zero()), grad))
}

/// Fraction of attention that falls within `radius` cells of the gaze
/// point, averaged over timestamps. Gaze is given in attention-grid
/// coordinates `(x, y)`.
pub fn attention_mass_in_disk<T: Real>(a: ArrayView3<'_, T>, gaze: &[(f64, f64)], radius: f64) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (at, &(gx, gy)) in a.outer_iter().zip(gaze) {
        let total: f64 = at.iter().map(|v| v.to_f64().unwrap_or(0.0)).sum();
        if total <= 0.0 {
            n += 1;
            continue;
        }
        let mut inside = 0.0;
        for ((i, j), v) in at.indexed_iter() {
            let d2 = (i as f64 - gy).powi(2) + (j as f64 - gx).powi(2);
            if d2 <= radius * radius {
                inside += v.to_f64().unwrap_or(0.0);
            }
        }
        acc += inside / total;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}
