//! Fully resolved run configuration, readable from and writable to flat
//! `key = value` text. Every key can also be given as a command-line flag.

use std::path::PathBuf;

use crate::attention::AttentionWidths;
use crate::backbone::{BackboneConfig, StageConfig};
use crate::dataset::SynthConfig;
use crate::error::{Error, Result};
use crate::gaze_supervision::{HeatmapConfig, OutOfFrame};
use crate::kv::{format_kv, parse_kv};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Test user of the fold to run, or `all`.
    pub fold: String,
    /// Frame rate clips are built at.
    pub eval_fps: u32,
    pub strict_louo: bool,
    pub synth: SynthConfig,
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
    pub heatmap: HeatmapConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            out: None,
            fold: "all".into(),
            eval_fps: 5,
            strict_louo: true,
            synth: SynthConfig::default(),
            backbone: BackboneConfig::default(),
            train: TrainConfig::default(),
            heatmap: HeatmapConfig::default(),
        }
    }
}

/// Every recognised configuration key, in serialization order.
pub const KEYS: &[&str] = &[
    "data",
    "out",
    "fold",
    "eval_fps",
    "strict_louo",
    "seed",
    "synth_users",
    "synth_trials_per_user",
    "synth_width",
    "synth_height",
    "synth_classes",
    "synth_segments_per_class",
    "synth_min_segment",
    "synth_max_segment",
    "synth_fps",
    "synth_gaze_noise",
    "clip_len",
    "height",
    "width",
    "stem_channels",
    "stem_stride",
    "stage_channels",
    "stage_strides",
    "attention_stage",
    "attention_widths",
    "scale_scope",
    "num_classes",
    "dropout",
    "batch_size",
    "momentum",
    "weight_decay",
    "lr",
    "lr_decay_factor",
    "lr_decay_at",
    "lr_step_every",
    "iters",
    "lambda_attn",
    "flip_prob",
    "freeze",
    "checkpoint_every",
    "workers",
    "gaze_sigma",
    "out_of_frame",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {v:?} for {key}"))),
    }
}

fn parse_triple(key: &str, v: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = v.split('x').collect();
    let [a, b, c] = parts[..] else {
        return Err(Error::Config(format!("{key} expects TxHxW, got {v:?}")));
    };
    Ok([parse_num(key, a)?, parse_num(key, b)?, parse_num(key, c)?])
}

fn fmt_triple(t: [usize; 3]) -> String {
    format!("{}x{}x{}", t[0], t[1], t[2])
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse_num(key, p.trim())).collect()
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let b = &mut self.backbone;
        let t = &mut self.train;
        let s = &mut self.synth;
        match key {
            "data" => self.data = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out" => self.out = (!v.is_empty()).then(|| PathBuf::from(v)),
            "fold" => self.fold = v.to_string(),
            "eval_fps" => self.eval_fps = parse_num(key, v)?,
            "strict_louo" => self.strict_louo = parse_bool(key, v)?,
            "seed" => {
                let seed = parse_num(key, v)?;
                t.seed = seed;
                s.seed = seed;
            }
            "synth_users" => s.num_users = parse_num(key, v)?,
            "synth_trials_per_user" => s.trials_per_user = parse_num(key, v)?,
            "synth_width" => s.width = parse_num(key, v)?,
            "synth_height" => s.height = parse_num(key, v)?,
            "synth_classes" => s.num_classes = parse_num(key, v)?,
            "synth_segments_per_class" => s.segments_per_class = parse_num(key, v)?,
            "synth_min_segment" => s.min_segment_frames = parse_num(key, v)?,
            "synth_max_segment" => s.max_segment_frames = parse_num(key, v)?,
            "synth_fps" => s.fps = parse_num(key, v)?,
            "synth_gaze_noise" => s.gaze_noise_px = parse_num(key, v)?,
            "clip_len" => b.clip_len = parse_num(key, v)?,
            "height" => b.height = parse_num(key, v)?,
            "width" => b.width = parse_num(key, v)?,
            "stem_channels" => b.stem_channels = parse_num(key, v)?,
            "stem_stride" => b.stem_stride = parse_triple(key, v)?,
            "stage_channels" => {
                let chans: Vec<usize> = parse_list(key, v)?;
                b.stages.resize(
                    chans.len(),
                    StageConfig {
                        channels: 0,
                        stride: [1; 3],
                    },
                );
                for (st, c) in b.stages.iter_mut().zip(chans) {
                    st.channels = c;
                }
            }
            "stage_strides" => {
                let strides = v
                    .split(',')
                    .map(|p| parse_triple(key, p.trim()))
                    .collect::<Result<Vec<_>>>()?;
                if strides.len() != b.stages.len() {
                    return Err(Error::Config(format!(
                        "stage_strides lists {} stages, stage_channels {}",
                        strides.len(),
                        b.stages.len()
                    )));
                }
                for (st, s) in b.stages.iter_mut().zip(strides) {
                    st.stride = s;
                }
            }
            "attention_stage" => b.attention_stage = parse_num(key, v)?,
            "attention_widths" => {
                let w: Vec<usize> = parse_list(key, v)?;
                let [w0, w1, w2, w3, r1, r2] = w[..] else {
                    return Err(Error::Config("attention_widths expects w0,w1,w2,w3,r1,r2".into()));
                };
                b.attention_widths = AttentionWidths { w0, w1, w2, w3, r1, r2 };
            }
            "scale_scope" => b.scale_scope = v.parse()?,
            "num_classes" => b.num_classes = parse_num(key, v)?,
            "dropout" => b.dropout = parse_num(key, v)?,
            "batch_size" => t.batch_size = parse_num(key, v)?,
            "momentum" => t.momentum = parse_num(key, v)?,
            "weight_decay" => t.weight_decay = parse_num(key, v)?,
            "lr" => t.lr0 = parse_num(key, v)?,
            "lr_decay_factor" => t.lr_decay_factor = parse_num(key, v)?,
            "lr_decay_at" => t.lr_decay_at = parse_num(key, v)?,
            "lr_step_every" => t.lr_step_every = parse_bool(key, v)?,
            "iters" => t.total_iters = parse_num(key, v)?,
            "lambda_attn" => t.lambda_attn = parse_num(key, v)?,
            "flip_prob" => t.flip_prob = parse_num(key, v)?,
            "freeze" => {
                t.freeze = v
                    .split(',')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(String::from)
                    .collect()
            }
            "checkpoint_every" => t.checkpoint_every = parse_num(key, v)?,
            "workers" => t.workers = parse_num(key, v)?,
            "gaze_sigma" => self.heatmap.sigma = parse_num(key, v)?,
            "out_of_frame" => {
                self.heatmap.out_of_frame = match v {
                    "clamp" => OutOfFrame::Clamp,
                    "skip" => OutOfFrame::Skip,
                    _ => return Err(Error::Config(format!("out_of_frame must be clamp or skip, got {v:?}"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.train.validate()?;
        self.synth.validate()?;
        if !(self.heatmap.sigma > 0.0) {
            return Err(Error::Config("gaze_sigma must be positive".into()));
        }
        if self.eval_fps == 0 {
            return Err(Error::Config("eval_fps must be positive".into()));
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> String {
        let b = &self.backbone;
        let t = &self.train;
        let s = &self.synth;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "data" => path(&self.data),
            "out" => path(&self.out),
            "fold" => self.fold.clone(),
            "eval_fps" => self.eval_fps.to_string(),
            "strict_louo" => self.strict_louo.to_string(),
            "seed" => t.seed.to_string(),
            "synth_users" => s.num_users.to_string(),
            "synth_trials_per_user" => s.trials_per_user.to_string(),
            "synth_width" => s.width.to_string(),
            "synth_height" => s.height.to_string(),
            "synth_classes" => s.num_classes.to_string(),
            "synth_segments_per_class" => s.segments_per_class.to_string(),
            "synth_min_segment" => s.min_segment_frames.to_string(),
            "synth_max_segment" => s.max_segment_frames.to_string(),
            "synth_fps" => s.fps.to_string(),
            "synth_gaze_noise" => s.gaze_noise_px.to_string(),
            "clip_len" => b.clip_len.to_string(),
            "height" => b.height.to_string(),
            "width" => b.width.to_string(),
            "stem_channels" => b.stem_channels.to_string(),
            "stem_stride" => fmt_triple(b.stem_stride),
            "stage_channels" => b
                .stages
                .iter()
                .map(|s| s.channels.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "stage_strides" => b
                .stages
                .iter()
                .map(|s| fmt_triple(s.stride))
                .collect::<Vec<_>>()
                .join(","),
            "attention_stage" => b.attention_stage.to_string(),
            "attention_widths" => {
                let w = b.attention_widths;
                format!("{},{},{},{},{},{}", w.w0, w.w1, w.w2, w.w3, w.r1, w.r2)
            }
            "scale_scope" => b.scale_scope.to_string(),
            "num_classes" => b.num_classes.to_string(),
            "dropout" => b.dropout.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "momentum" => t.momentum.to_string(),
            "weight_decay" => t.weight_decay.to_string(),
            "lr" => t.lr0.to_string(),
            "lr_decay_factor" => t.lr_decay_factor.to_string(),
            "lr_decay_at" => t.lr_decay_at.to_string(),
            "lr_step_every" => t.lr_step_every.to_string(),
            "iters" => t.total_iters.to_string(),
            "lambda_attn" => t.lambda_attn.to_string(),
            "flip_prob" => t.flip_prob.to_string(),
            "freeze" => t.freeze.join(","),
            "checkpoint_every" => t.checkpoint_every.to_string(),
            "workers" => t.workers.to_string(),
            "gaze_sigma" => self.heatmap.sigma.to_string(),
            "out_of_frame" => match self.heatmap.out_of_frame {
                OutOfFrame::Clamp => "clamp".into(),
                OutOfFrame::Skip => "skip".into(),
            },
            _ => unreachable!("unknown key {key}"),
        }
    }

    pub fn to_text(&self) -> String {
        format_kv(KEYS.iter().map(|&k| (k, self.get(k))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::from_text(
            "iters = 3\nbatch_size = 2\nstage_channels = 4,6\nstage_strides = 1x2x2,1x1x1\nattention_stage = 1\nfreeze = classifier\nseed = 11\n",
        )
        .unwrap();
        assert_eq!(cfg.train.total_iters, 3);
        assert_eq!(cfg.backbone.stages.len(), 2);
        assert_eq!(cfg.backbone.stages[0].stride, [1, 2, 2]);
        assert_eq!(cfg.train.freeze, vec!["classifier".to_string()]);
        assert_eq!(cfg.synth.seed, 11);
        assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(RunConfig::from_text("bogus = 1"), Err(Error::Config(_))));
        assert!(RunConfig::from_text("dropout = 1.0").is_err());
        assert!(RunConfig::from_text("attention_stage = 9").is_err());
        assert!(RunConfig::from_text("stem_stride = 2x2").is_err());
    }

    #[test]
    fn every_key_is_readable() {
        let cfg = RunConfig::default();
        for k in KEYS {
            let mut c = cfg.clone();
            c.set(k, &cfg.get(k)).unwrap();
            assert_eq!(c, cfg, "{k}");
        }
    }
}
