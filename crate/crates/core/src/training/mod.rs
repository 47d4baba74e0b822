//! Composite loss, SGD with momentum, learning-rate schedule, flip
//! augmentation and the iteration-driven training loop.

mod augment;
mod loss;
mod sgd;
mod trainer;

pub use augment::{augment, flip_clip};
pub use loss::{cross_entropy, total_loss, LossParts};
pub use sgd::{sgd_update, Sgd};
pub use trainer::{read_log, train, LogRow, TrainOutcome, TrainSink, CHECKPOINT_FILE, LOG_FILE};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr0: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_at: u64,
    /// Decay every `lr_decay_at` iterations instead of once.
    pub lr_step_every: bool,
    pub total_iters: u64,
    pub lambda_attn: f64,
    pub flip_prob: f64,
    pub seed: u64,
    /// Parameter-name prefixes excluded from updates.
    pub freeze: Vec<String>,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: u64,
    /// Threads used for per-sample forward/backward within a batch.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 12,
            momentum: 0.9,
            weight_decay: 7e-7,
            lr0: 0.1,
            lr_decay_factor: 0.1,
            lr_decay_at: 1000,
            lr_step_every: false,
            total_iters: 10_000,
            lambda_attn: 1.0,
            flip_prob: 0.5,
            seed: 7,
            freeze: Vec::new(),
            checkpoint_every: 0,
            workers: 1,
        }
    }
}

impl TrainConfig {
    /// Shortened schedule used for CPU-scale experiments.
    pub fn desk_scale() -> Self {
        Self {
            total_iters: 2000,
            lr_decay_at: 500,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.total_iters == 0 || self.workers == 0 {
            return Err(Error::Config("batch_size, iters and workers must be positive".into()));
        }
        if !(self.lr0 > 0.0) || !(self.lr_decay_factor > 0.0) || self.lr_decay_at == 0 {
            return Err(Error::Config("learning rate schedule must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 || self.lambda_attn < 0.0 {
            return Err(Error::Config(
                "momentum in [0,1), weight_decay and lambda_attn ≥ 0 required".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip_prob {} not in [0, 1]", self.flip_prob)));
        }
        Ok(())
    }
}

/// Learning rate in effect at iteration `iter` (0-based).
pub fn lr_at(iter: u64, cfg: &TrainConfig) -> f64 {
    let decays = if cfg.lr_step_every {
        iter / cfg.lr_decay_at
    } else {
        u64::from(iter >= cfg.lr_decay_at)
    };
    cfg.lr0 * cfg.lr_decay_factor.powi(decays as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_decays_once_by_default() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 0.1);
        assert!((lr_at(999, &cfg) - 0.1).abs() < 1e-15);
        assert!((lr_at(1000, &cfg) - 0.01).abs() < 1e-15);
        assert!((lr_at(9999, &cfg) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn step_every_reading() {
        let cfg = TrainConfig {
            lr_step_every: true,
            ..TrainConfig::default()
        };
        assert!((lr_at(2500, &cfg) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn full_schedule_defaults() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.batch_size, 12);
        assert_eq!(cfg.momentum, 0.9);
        assert_eq!(cfg.weight_decay, 0.0000007);
        assert_eq!(cfg.total_iters, 10_000);
        assert!(cfg.validate().is_ok());
        assert!(TrainConfig { flip_prob: 1.5, ..cfg }.validate().is_err());
    }
}
