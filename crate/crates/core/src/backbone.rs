//! Width-reduced inflated 3D classifier with the attention module inserted
//! after a configurable stage.

use ndarray::{Array1, Array3, Array4, ArrayView1, ArrayView3, ArrayView4, ArrayViewD, ArrayViewMutD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    apply_attention, apply_attention_backward, AttentionCache, AttentionModule, AttentionWidths, ScaleScope,
};
use crate::error::{Error, Result};
use crate::nn::{dropout_mask, join, relu, relu_backward, Conv3d, Conv3dCache, Conv3dSpec, Linear, Parameters};
use crate::real::{lit, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageConfig {
    pub channels: usize,
    /// (T, H, W) stride of the stage's 3×3×3 convolution.
    pub stride: [usize; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackboneConfig {
    pub clip_len: usize,
    pub height: usize,
    pub width: usize,
    pub stem_channels: usize,
    pub stem_stride: [usize; 3],
    pub stages: Vec<StageConfig>,
    /// 1-based stage after which attention is applied.
    pub attention_stage: usize,
    pub attention_widths: AttentionWidths,
    pub scale_scope: ScaleScope,
    pub num_classes: usize,
    pub dropout: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            clip_len: 8,
            height: 64,
            width: 64,
            stem_channels: 8,
            stem_stride: [2, 2, 2],
            stages: vec![
                StageConfig {
                    channels: 16,
                    stride: [1, 2, 2],
                },
                StageConfig {
                    channels: 32,
                    stride: [1, 1, 1],
                },
                StageConfig {
                    channels: 64,
                    stride: [2, 2, 2],
                },
            ],
            attention_stage: 2,
            attention_widths: AttentionWidths::default(),
            scale_scope: ScaleScope::Volume,
            num_classes: 4,
            dropout: 0.5,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("backbone needs at least one stage".into()));
        }
        if self.attention_stage == 0 || self.attention_stage > self.stages.len() {
            return Err(Error::Config(format!(
                "attention stage {} is not in 1..={}",
                self.attention_stage,
                self.stages.len()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.num_classes < 1 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        let w = self.attention_widths;
        if [w.w0, w.w1, w.w2, w.w3, w.r1, w.r2].contains(&0) {
            return Err(Error::Config("attention widths must be positive".into()));
        }
        self.attention_dims().map(|_| ())
    }

    fn stem_spec(&self) -> Conv3dSpec {
        Conv3dSpec {
            in_channels: 3,
            out_channels: self.stem_channels,
            kernel: [3; 3],
            stride: self.stem_stride,
            padding: [1; 3],
        }
    }

    fn stage_specs(&self) -> Vec<Conv3dSpec> {
        let mut c = self.stem_channels;
        self.stages
            .iter()
            .map(|s| {
                let spec = Conv3dSpec {
                    in_channels: c,
                    out_channels: s.channels,
                    kernel: [3; 3],
                    stride: s.stride,
                    padding: [1; 3],
                };
                c = s.channels;
                spec
            })
            .collect()
    }

    /// `(T', H', W')` of the attention map.
    pub fn attention_dims(&self) -> Result<(usize, usize, usize)> {
        let mut dims = self.stem_spec().output_dims([self.clip_len, self.height, self.width])?;
        for spec in &self.stage_specs()[..self.attention_stage] {
            dims = spec.output_dims(dims)?;
        }
        Ok((dims[0], dims[1], dims[2]))
    }

    pub fn attention_channels(&self) -> usize {
        self.stages[self.attention_stage - 1].channels
    }
}

/// Train mode draws a dropout mask; eval mode is deterministic.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct I3d<T> {
    pub config: BackboneConfig,
    pub stem: Conv3d<T>,
    pub stages: Vec<Conv3d<T>>,
    pub attention: AttentionModule<T>,
    pub classifier: Linear<T>,
}

pub struct ForwardCache<T> {
    stem: Conv3dCache<T>,
    stem_out: Array4<T>,
    stages: Vec<(Conv3dCache<T>, Array4<T>)>,
    attention: AttentionCache<T>,
    pooled: Array1<T>,
    mask: Option<Array1<T>>,
}

pub struct ForwardOutput<T> {
    pub logits: Array1<T>,
    pub attention: Array3<T>,
    pub cache: ForwardCache<T>,
}

impl<T: Real> I3d<T> {
    pub fn init(config: BackboneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stem = Conv3d::init(config.stem_spec(), &mut rng);
        let stages = config
            .stage_specs()
            .into_iter()
            .map(|s| Conv3d::init(s, &mut rng))
            .collect();
        let attention = AttentionModule::init(
            config.attention_channels(),
            config.attention_widths,
            config.scale_scope,
            &mut rng,
        );
        let classifier = Linear::init(
            config.stages.last().expect("validated").channels,
            config.num_classes,
            &mut rng,
        );
        Ok(Self {
            config,
            stem,
            stages,
            attention,
            classifier,
        })
    }

    /// Same architecture with all parameters zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    /// Runs one clip given as `(3, T, H, W)`.
    pub fn forward(&self, input: ArrayView4<'_, T>, mode: Mode<'_>) -> Result<ForwardOutput<T>> {
        let c = &self.config;
        if input.dim() != (3, c.clip_len, c.height, c.width) {
            return Err(Error::Shape(format!(
                "clip {:?} does not match configured (3, {}, {}, {})",
                input.shape(),
                c.clip_len,
                c.height,
                c.width
            )));
        }
        let (x, stem_cache) = self.stem.forward(input)?;
        let stem_out = relu(x);
        let mut stages = Vec::with_capacity(self.stages.len());
        let mut attention = None;
        let mut h = stem_out.clone();
        for (i, conv) in self.stages.iter().enumerate() {
            let (y, cache) = conv.forward(h.view())?;
            let y = relu(y);
            h = if i + 1 == c.attention_stage {
                let (a, ac) = self.attention.forward(y.view())?;
                let out = apply_attention(y.view(), a.view())?;
                attention = Some((a, ac));
                out
            } else {
                y.clone()
            };
            stages.push((cache, y));
        }
        let (attn_map, attn_cache) = attention.expect("validated attention stage");
        let pooled = global_average(h.view());
        let (features, mask) = match mode {
            Mode::Train(rng) if c.dropout > 0.0 => {
                let m = dropout_mask::<T, _>(pooled.len(), c.dropout, rng);
                (&pooled * &m, Some(m))
            }
            _ => (pooled.clone(), None),
        };
        let logits = self.classifier.forward(features.view())?;
        Ok(ForwardOutput {
            logits,
            attention: attn_map,
            cache: ForwardCache {
                stem: stem_cache,
                stem_out,
                stages,
                attention: attn_cache,
                pooled,
                mask,
            },
        })
    }

    /// Accumulates gradients of a loss with respect to the logits and,
    /// optionally, directly with respect to the attention map.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        attention: ArrayView3<'_, T>,
        d_logits: ArrayView1<'_, T>,
        d_attention: Option<ArrayView3<'_, T>>,
        grad: &mut Self,
    ) {
        let c = &self.config;
        let features = match &cache.mask {
            Some(m) => &cache.pooled * m,
            None => cache.pooled.clone(),
        };
        let mut d_feat = self
            .classifier
            .backward(features.view(), d_logits, &mut grad.classifier);
        if let Some(m) = &cache.mask {
            d_feat *= m;
        }
        let (last_c, t, h, w) = cache.stages.last().expect("stages").1.dim();
        let n = lit::<T>((t * h * w) as f64);
        let mut d_h = Array4::<T>::zeros((last_c, t, h, w));
        for (mut ch, &g) in d_h.outer_iter_mut().zip(d_feat.iter()) {
            ch.fill(g / n);
        }
        for i in (0..self.stages.len()).rev() {
            let (conv_cache, y) = &cache.stages[i];
            if i + 1 == c.attention_stage {
                let (dx_direct, mut d_a) = apply_attention_backward(y.view(), attention, d_h.view());
                if let Some(extra) = d_attention {
                    d_a += &extra;
                }
                let dx_attn = self
                    .attention
                    .backward(&cache.attention, d_a.view(), &mut grad.attention);
                d_h = dx_direct + dx_attn;
            }
            let d_pre = relu_backward(y.view(), d_h);
            d_h = self.stages[i]
                .backward(conv_cache, d_pre.view(), &mut grad.stages[i], true)
                .expect("input grad requested");
        }
        let d_stem = relu_backward(cache.stem_out.view(), d_h);
        self.stem.backward(&cache.stem, d_stem.view(), &mut grad.stem, false);
    }
}

fn global_average<T: Real>(x: ArrayView4<'_, T>) -> Array1<T> {
    let (c, t, h, w) = x.dim();
    let n = lit::<T>((t * h * w) as f64);
    x.to_shape((c, t * h * w))
        .expect("reshape")
        .sum_axis(Axis(1))
        .mapv(|v| v / n)
}

/// Converts `(T, H, W, 3)` intensities in `[0, 1]` into a `(3, T, H, W)`
/// network input in `[-1, 1]`.
pub fn clip_input<T: Real>(frames: ArrayView4<'_, f32>) -> Array4<T> {
    frames
        .permuted_axes([3, 0, 1, 2])
        .as_standard_layout()
        .mapv(|v| lit::<T>(v as f64 * 2.0 - 1.0))
}

pub fn softmax<T: Real>(logits: ArrayView1<'_, T>) -> Array1<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e = logits.mapv(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

pub fn argmax<T: Real>(v: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl<T: Real> Parameters<T> for I3d<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewD<'a, T>)) {
        self.stem.visit(&join(prefix, "stem"), f);
        for (i, s) in self.stages.iter().enumerate() {
            s.visit(&join(prefix, &format!("stage{}", i + 1)), f);
        }
        self.attention.visit(&join(prefix, "attention"), f);
        self.classifier.visit(&join(prefix, "classifier"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, ArrayViewMutD<'a, T>)) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.visit_mut(&join(prefix, &format!("stage{}", i + 1)), f);
        }
        self.attention.visit_mut(&join(prefix, "attention"), f);
        self.classifier.visit_mut(&join(prefix, "classifier"), f);
    }
}

/// Seeds a dropout generator for sample `k` of iteration `iter`.
pub fn sample_rng(seed: u64, iter: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream((iter << 16) | k);
    rng
}
