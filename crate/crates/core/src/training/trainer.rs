use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{augment, lr_at, total_loss, Sgd};
use crate::backbone::{clip_input, sample_rng, BackboneConfig, I3d, Mode};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{make_windows, Clip, ClipWindow, Trial};
use crate::error::{Error, Result};
use crate::gaze_supervision::heatmap_volume;
use crate::nn::Parameters;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: u64,
    pub lr: f64,
    pub ce_loss: f64,
    pub attn_loss: f64,
    pub total: f64,
}

/// Output directory for logs and checkpoints.
#[derive(Debug, Clone)]
pub struct TrainSink {
    pub dir: PathBuf,
    /// Print a progress line to stderr every this many iterations (0: never).
    pub progress_every: u64,
}

impl TrainSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            progress_every: 0,
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.dir.join(CHECKPOINT_FILE)
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }
}

pub struct TrainOutcome {
    pub model: I3d<f32>,
    pub optimizer: Sgd<f32>,
    pub log: Vec<LogRow>,
}

struct SampleResult {
    grad: I3d<f32>,
    ce: f64,
    attn: f64,
    total: f64,
}

/// Iteration-driven training over all labeled windows of `trials`.
///
/// Deterministic for a fixed seed: every sample's augmentation and dropout
/// draw from a generator keyed by (seed, iteration, slot), and per-sample
/// gradients are summed in slot order regardless of `workers`.
pub fn train(trials: &[&Trial], run: &RunConfig, sink: Option<&TrainSink>) -> Result<TrainOutcome> {
    run.validate()?;
    let tc = &run.train;
    let bc = &run.backbone;
    let windows = collect_windows(trials, bc)?;
    let attn_dims = bc.attention_dims()?;
    let mut model = I3d::<f32>::init(bc.clone(), tc.seed)?;
    let mut optimizer = Sgd::new(&model, tc.momentum, tc.weight_decay);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(tc.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let mut log_file = match sink {
        Some(s) => {
            fs::create_dir_all(&s.dir).map_err(|e| Error::io(&s.dir, e))?;
            let p = s.log_path();
            Some(BufWriter::new(File::create(&p).map_err(|e| Error::io(&p, e))?))
        }
        None => None,
    };

    let mut order_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0;
    let mut log = Vec::with_capacity(tc.total_iters as usize);
    let scale = 1.0 / tc.batch_size as f32;

    for iter in 0..tc.total_iters {
        let mut batch = Vec::with_capacity(tc.batch_size);
        while batch.len() < tc.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let results: Vec<Result<SampleResult>> = pool.install(|| {
            batch
                .par_iter()
                .enumerate()
                .map(|(k, &wi)| {
                    let (ti, ref w) = windows[wi];
                    sample_step(
                        &model,
                        trials[ti],
                        w,
                        run,
                        attn_dims,
                        sample_rng(tc.seed, iter, k as u64),
                    )
                })
                .collect()
        });
        let mut grad = model.zeros_like();
        let (mut ce, mut attn, mut total) = (0.0, 0.0, 0.0);
        for r in results {
            let r = r?;
            grad.accumulate(&r.grad);
            ce += r.ce;
            attn += r.attn;
            total += r.total;
        }
        grad.scale(scale);
        let n = tc.batch_size as f64;
        let lr = lr_at(iter, tc);
        let row = LogRow {
            iter,
            lr,
            ce_loss: ce / n,
            attn_loss: attn / n,
            total: total / n,
        };
        let step = if row.total.is_finite() {
            optimizer.step(&mut model, &grad, lr, &tc.freeze)
        } else {
            Err(Error::NonFinite(format!(
                "loss at iteration {iter}: ce {} attn {}",
                row.ce_loss, row.attn_loss
            )))
        };
        if let Err(e) = step {
            if let Some(s) = sink {
                if let Some(f) = log_file.as_mut() {
                    f.flush().map_err(|e| Error::io(s.log_path(), e))?;
                }
                Checkpoint::capture(&model, Some(&optimizer), iter, run).save(&s.checkpoint_path())?;
            }
            return Err(e);
        }
        if let (Some(f), Some(s)) = (log_file.as_mut(), sink) {
            let line = serde_json::to_string(&row)?;
            writeln!(f, "{line}").map_err(|e| Error::io(s.log_path(), e))?;
            if s.progress_every > 0 && (iter + 1) % s.progress_every == 0 {
                eprintln!(
                    "iter {:>6}  lr {:.4}  ce {:.4}  attn {:.4}  total {:.4}",
                    iter + 1,
                    row.lr,
                    row.ce_loss,
                    row.attn_loss,
                    row.total
                );
            }
            if tc.checkpoint_every > 0 && (iter + 1) % tc.checkpoint_every == 0 && iter + 1 < tc.total_iters {
                f.flush().map_err(|e| Error::io(s.log_path(), e))?;
                Checkpoint::capture(&model, Some(&optimizer), iter + 1, run).save(&s.checkpoint_path())?;
            }
        }
        log.push(row);
    }
    if let (Some(mut f), Some(s)) = (log_file, sink) {
        f.flush().map_err(|e| Error::io(s.log_path(), e))?;
        Checkpoint::capture(&model, Some(&optimizer), tc.total_iters, run).save(&s.checkpoint_path())?;
    }
    Ok(TrainOutcome { model, optimizer, log })
}

fn collect_windows(trials: &[&Trial], bc: &BackboneConfig) -> Result<Vec<(usize, ClipWindow)>> {
    if trials.is_empty() {
        return Err(Error::Validation("training split is empty".into()));
    }
    let (clip_len, num_classes) = (bc.clip_len, bc.num_classes);
    let mut out = Vec::new();
    for (ti, t) in trials.iter().enumerate() {
        if (t.frames.width(), t.frames.height()) != (bc.width, bc.height) {
            return Err(Error::Validation(format!(
                "trial {} has {}x{} frames, the model expects {}x{}",
                t.trial_id,
                t.frames.width(),
                t.frames.height(),
                bc.width,
                bc.height
            )));
        }
        for w in make_windows(&t.timeline(), clip_len) {
            let class = w.label.class_index().expect("windows are labeled");
            if class >= num_classes {
                return Err(Error::Validation(format!(
                    "trial {} uses {} but the model has {num_classes} classes",
                    t.trial_id, w.label
                )));
            }
            out.push((ti, w));
        }
    }
    if out.is_empty() {
        return Err(Error::Validation("training split has no labeled frames".into()));
    }
    Ok(out)
}

fn sample_step(
    model: &I3d<f32>,
    trial: &Trial,
    window: &ClipWindow,
    run: &RunConfig,
    attn_dims: (usize, usize, usize),
    mut rng: ChaCha8Rng,
) -> Result<SampleResult> {
    let clip = augment(Clip::extract(trial, window), run.train.flip_prob, &mut rng);
    let input = clip_input::<f32>(clip.frames.view());
    let target = if run.train.lambda_attn > 0.0 {
        heatmap_volume::<f32>(
            &clip.gaze,
            trial.frames.width(),
            trial.frames.height(),
            attn_dims,
            &run.heatmap,
        )?
        .values
    } else {
        Array3::zeros(attn_dims)
    };
    let out = model.forward(input.view(), Mode::Train(&mut rng))?;
    let parts = total_loss(
        out.logits.view(),
        clip.label,
        out.attention.view(),
        target.view(),
        run.train.lambda_attn,
    )?;
    let mut grad = model.zeros_like();
    model.backward(
        &out.cache,
        out.attention.view(),
        parts.d_logits.view(),
        Some(parts.d_attention.view()),
        &mut grad,
    );
    Ok(SampleResult {
        grad,
        ce: parts.ce as f64,
        attn: parts.attn as f64,
        total: parts.total as f64,
    })
}

/// Reads a JSON-lines training log.
pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
