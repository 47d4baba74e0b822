//! Checks shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use gazeattn::attention::{
    apply_attention, apply_attention_backward, attention_loss, AttentionModule, AttentionWidths, ScaleScope,
};
use gazeattn::nn::{inflate_2d, relu, Conv3d, Conv3dSpec, Parameters};
use ndarray::{Array3, Array4, ArrayD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal4(shape: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Array4<f64> {
    Array4::from_shape_simple_fn(shape, || rng.sample::<f64, _>(StandardNormal))
}

/// A gaze-like target: a random positive map normalized per timestamp.
pub fn random_target(dims: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Array3<f64> {
    let mut g = Array3::from_shape_simple_fn(dims, || rng.random_range(0.01..1.0));
    for mut slot in g.outer_iter_mut() {
        let s = slot.sum();
        slot.mapv_inplace(|v| v / s);
    }
    g
}

pub fn small_widths() -> AttentionWidths {
    AttentionWidths {
        w0: 2,
        w1: 3,
        w2: 2,
        w3: 2,
        r1: 2,
        r2: 3,
    }
}

/// `Σ w·(X ⊙ (1 + A(X))) + KL(G ‖ Â)`: the attention path of one training step.
pub struct Pipeline {
    pub module: AttentionModule<f64>,
    pub x: Array4<f64>,
    pub w: Array4<f64>,
    pub g: Array3<f64>,
}

impl Pipeline {
    pub fn random(seed: u64, shape: (usize, usize, usize, usize)) -> Self {
        let mut r = rng(seed);
        let module = AttentionModule::init(shape.0, small_widths(), ScaleScope::Volume, &mut r);
        let x = normal4(shape, &mut r);
        let w = normal4(shape, &mut r);
        let g = random_target((shape.1, shape.2, shape.3), &mut r);
        Self { module, x, w, g }
    }

    pub fn loss(&self, module: &AttentionModule<f64>, x: &Array4<f64>) -> f64 {
        let (a, _) = module.forward(x.view()).unwrap();
        let y = apply_attention(x.view(), a.view()).unwrap();
        (&y * &self.w).sum() + attention_loss(a.view(), self.g.view()).unwrap().0
    }

    pub fn analytic(&self) -> (Array4<f64>, AttentionModule<f64>) {
        let (a, cache) = self.module.forward(self.x.view()).unwrap();
        let (dx_direct, mut da) = apply_attention_backward(self.x.view(), a.view(), self.w.view());
        da += &attention_loss(a.view(), self.g.view()).unwrap().1;
        let mut grad = self.module.clone();
        grad.fill_zero();
        let dx = dx_direct + self.module.backward(&cache, da.view(), &mut grad);
        (dx, grad)
    }
}

/// Norm below which a gradient counts as zero. Branch biases that shift the
/// raw attention uniformly are cancelled by min-max scaling, so their true
/// gradient is exactly zero and both estimates are roundoff.
pub const GRAD_FLOOR: f64 = 1e-4;

/// `‖a − n‖ / max(‖a‖, ‖n‖, GRAD_FLOOR)`.
pub fn relative_error(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>) -> f64 {
    let diff = (analytic - numeric).mapv(|v| v * v).sum().sqrt();
    let scale = analytic
        .mapv(|v| v * v)
        .sum()
        .sqrt()
        .max(numeric.mapv(|v| v * v).sum().sqrt())
        .max(GRAD_FLOOR);
    diff / scale
}

/// Worst relative error over the input and every parameter tensor, using
/// central differences with step `h`.
pub fn gradient_check(p: &Pipeline, h: f64) -> Vec<(String, f64)> {
    let (dx, grad) = p.analytic();
    let mut report = Vec::new();

    let mut numeric = Array4::<f64>::zeros(p.x.dim());
    for idx in ndarray::indices(p.x.dim()) {
        let mut xp = p.x.clone();
        xp[idx] += h;
        let mut xm = p.x.clone();
        xm[idx] -= h;
        numeric[idx] = (p.loss(&p.module, &xp) - p.loss(&p.module, &xm)) / (2.0 * h);
    }
    report.push(("input".to_string(), relative_error(&dx.into_dyn(), &numeric.into_dyn())));

    let analytic: Vec<(String, ArrayD<f64>)> = grad.named().into_iter().map(|(n, a)| (n, a.to_owned())).collect();
    for (pi, (name, ga)) in analytic.iter().enumerate() {
        let mut num = ArrayD::<f64>::zeros(ga.raw_dim());
        for k in 0..ga.len() {
            let eval = |delta: f64| {
                let mut m = p.module.clone();
                let mut params = m.named_mut();
                let view = &mut params[pi].1;
                let flat = view.as_slice_mut().expect("contiguous parameters");
                flat[k] += delta;
                drop(params);
                p.loss(&m, &p.x)
            };
            num.as_slice_mut().unwrap()[k] = (eval(h) - eval(-h)) / (2.0 * h);
        }
        report.push((name.clone(), relative_error(ga, &num)));
    }
    report
}

/// Direct 2D convolution with zero padding, channels first `(C, H, W)`.
pub fn conv2d_oracle(x: &Array3<f32>, w: &Array4<f32>, b: &[f32], pad: usize) -> Array3<f32> {
    let (c_in, h, wd) = x.dim();
    let (c_out, _, k, _) = w.dim();
    let (oh, ow) = (h + 2 * pad - k + 1, wd + 2 * pad - k + 1);
    let mut y = Array3::<f32>::zeros((c_out, oh, ow));
    for o in 0..c_out {
        for i in 0..oh {
            for j in 0..ow {
                let mut acc = b[o] as f64;
                for c in 0..c_in {
                    for di in 0..k {
                        for dj in 0..k {
                            let (si, sj) = ((i + di) as isize - pad as isize, (j + dj) as isize - pad as isize);
                            if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < wd {
                                acc += w[[o, c, di, dj]] as f64 * x[[c, si as usize, sj as usize]] as f64;
                            }
                        }
                    }
                }
                y[[o, i, j]] = acc as f32;
            }
        }
    }
    y
}

/// Runs a random two-layer 2D network and its inflation (temporal extent
/// `n`, no temporal padding) on a frame repeated `frames` times; returns the
/// largest per-frame deviation.
pub fn inflation_error(seed: u64, n: usize, frames: usize) -> f32 {
    let mut r = rng(seed);
    let (c0, c1, c2, h, w) = (3, 5, 4, 9, 11);
    let mut uniform4 =
        |s: (usize, usize, usize, usize)| Array4::from_shape_simple_fn(s, || r.random_range(-0.5f32..0.5));
    let w1 = uniform4((c1, c0, 3, 3));
    let w2 = uniform4((c2, c1, 3, 3));
    let frame = uniform4((1, c0, h, w)).index_axis_move(Axis(0), 0);
    let b1: Vec<f32> = (0..c1).map(|i| 0.1 * i as f32 - 0.2).collect();
    let b2: Vec<f32> = (0..c2).map(|i| 0.05 * i as f32).collect();

    let reference = conv2d_oracle(&relu(conv2d_oracle(&frame, &w1, &b1, 1)), &w2, &b2, 1);

    let spec = |i, o| Conv3dSpec {
        in_channels: i,
        out_channels: o,
        kernel: [n, 3, 3],
        stride: [1, 1, 1],
        padding: [0, 1, 1],
    };
    let l1 = Conv3d::from_parts(spec(c0, c1), inflate_2d(&w1, n).unwrap(), b1.clone().into()).unwrap();
    let l2 = Conv3d::from_parts(spec(c1, c2), inflate_2d(&w2, n).unwrap(), b2.clone().into()).unwrap();
    let video = Array4::from_shape_fn((c0, frames, h, w), |(c, _, i, j)| frame[[c, i, j]]);
    let (y1, _) = l1.forward(video.view()).unwrap();
    let (y2, _) = l2.forward(relu(y1).view()).unwrap();
    assert_eq!(y2.dim().1, frames + 2 - 2 * n);
    let mut worst = 0.0f32;
    for t in 0..y2.dim().1 {
        let slice = y2.index_axis(Axis(1), t);
        for (a, b) in slice.iter().zip(reference.iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// One random (input, parameter) draw of the attention module; checks the
/// output shape and that values span exactly `[0, 1]` per scaling scope.
pub fn attention_range_draw(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let shape = (
        r.random_range(1..5),
        r.random_range(1..5),
        r.random_range(1..7),
        r.random_range(1..7),
    );
    let scope = if r.random_bool(0.5) {
        ScaleScope::Volume
    } else {
        ScaleScope::PerTimestamp
    };
    let widths = AttentionWidths {
        w0: r.random_range(1..5),
        w1: r.random_range(1..5),
        w2: r.random_range(1..5),
        w3: r.random_range(1..5),
        r1: r.random_range(1..5),
        r2: r.random_range(1..5),
    };
    let module = AttentionModule::<f64>::init(shape.0, widths, scope, &mut r);
    let scale = 10f64.powf(r.random_range(-3.0..3.0));
    let x = normal4(shape, &mut r).mapv(|v| v * scale);
    let (a, _) = module.forward(x.view()).map_err(|e| e.to_string())?;
    if a.dim() != (shape.1, shape.2, shape.3) {
        return Err(format!("shape {:?} for input {shape:?}", a.dim()));
    }
    let groups: Vec<Vec<f64>> = match scope {
        ScaleScope::Volume => vec![a.iter().copied().collect()],
        ScaleScope::PerTimestamp => a.outer_iter().map(|s| s.iter().copied().collect()).collect(),
    };
    for g in groups {
        if g.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("value outside [0, 1] (seed {seed})"));
        }
        let degenerate = g.iter().all(|&v| v == 0.0);
        let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !degenerate && (lo != 0.0 || hi != 1.0) {
            return Err(format!("range [{lo}, {hi}] does not reach both ends (seed {seed})"));
        }
        if degenerate && g.len() > 1 && shape.2 * shape.3 > 1 && x.iter().any(|v| *v != 0.0) {
            // A constant response over several cells is possible only for
            // degenerate weights; random draws should never produce it.
            return Err(format!("unexpected constant response (seed {seed})"));
        }
    }
    Ok(())
}

/// A run small enough to train in seconds: 16x16 frames, 4-frame clips.
pub fn tiny_run() -> gazeattn::config::RunConfig {
    use gazeattn::backbone::StageConfig;
    let mut run = gazeattn::config::RunConfig::default();
    run.synth.num_users = 2;
    run.synth.trials_per_user = 1;
    run.synth.width = 16;
    run.synth.height = 16;
    run.synth.segments_per_class = 1;
    run.synth.min_segment_frames = 8;
    run.synth.max_segment_frames = 12;
    let b = &mut run.backbone;
    b.clip_len = 4;
    b.width = 16;
    b.height = 16;
    b.stem_channels = 4;
    b.stem_stride = [1, 2, 2];
    b.stages = vec![
        StageConfig {
            channels: 6,
            stride: [1, 1, 1],
        },
        StageConfig {
            channels: 8,
            stride: [2, 2, 2],
        },
    ];
    b.attention_stage = 1;
    b.attention_widths = small_widths();
    run.train.batch_size = 4;
    run.train.total_iters = 3;
    run.train.lr0 = 0.05;
    run.strict_louo = false;
    run
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn tree(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(root, root, &mut out);
    out
}
