//! Deterministic surrogate dataset: two "instrument" blobs on a textured
//! background, one motion pattern per gesture class, gaze on the active blob.

use std::f32::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use super::frames::Frames;
use super::gaze::GazeTrack;
use super::gesture::{GestureLabel, NUM_GESTURES};
use super::transcription::Segment;
use super::trial::{Dataset, Trial};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_users: usize,
    pub trials_per_user: usize,
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    /// Occurrences of every class within one trial.
    pub segments_per_class: usize,
    pub min_segment_frames: usize,
    pub max_segment_frames: usize,
    pub fps: u32,
    /// Standard deviation of gaze noise in pixels at 64 px frame width.
    pub gaze_noise_px: f32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            num_users: 8,
            trials_per_user: 4,
            width: 64,
            height: 64,
            num_classes: 4,
            segments_per_class: 2,
            min_segment_frames: 20,
            max_segment_frames: 60,
            fps: 5,
            gaze_noise_px: 2.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.num_classes > NUM_GESTURES {
            return Err(Error::Config(format!(
                "num_classes must be in 2..=10, got {}",
                self.num_classes
            )));
        }
        if self.num_users == 0 || self.trials_per_user == 0 || self.segments_per_class == 0 {
            return Err(Error::Config("users, trials and segments must be positive".into()));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::Config("frames must be at least 16x16".into()));
        }
        if self.min_segment_frames == 0 || self.min_segment_frames > self.max_segment_frames {
            return Err(Error::Config("invalid segment duration range".into()));
        }
        if self.fps == 0 {
            return Err(Error::Config("fps must be positive".into()));
        }
        Ok(())
    }
}

/// Counts reported after generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub trials: usize,
    pub frames: usize,
    pub class_frames: Vec<(GestureLabel, usize)>,
}

impl SynthSummary {
    pub fn of(dataset: &Dataset) -> Self {
        let mut counts = [0usize; NUM_GESTURES];
        for t in &dataset.trials {
            for s in &t.segments {
                counts[s.label.class_index().expect("labeled")] += s.end_frame - s.start_frame + 1;
            }
        }
        Self {
            trials: dataset.trials.len(),
            frames: dataset.trials.iter().map(Trial::num_frames).sum(),
            class_frames: GestureLabel::ALL
                .iter()
                .zip(counts)
                .filter(|(_, c)| *c > 0)
                .map(|(g, c)| (*g, c))
                .collect(),
        }
    }
}

pub fn user_ids(n: usize) -> Vec<String> {
    // the public suturing release names its surgeons B through I
    const LETTERS: &str = "BCDEFGHIJKLMNOPQRSTUVWXYZ";
    if n <= LETTERS.len() {
        LETTERS.chars().take(n).map(String::from).collect()
    } else {
        (0..n).map(|i| format!("U{i:03}")).collect()
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy)]
struct UserStyle {
    speed: f32,
    offset: (f32, f32),
    tint: [f32; 3],
}

impl UserStyle {
    fn draw(rng: &mut ChaCha8Rng, scale: f32) -> Self {
        Self {
            speed: rng.random_range(0.8..1.2),
            offset: (rng.random_range(-6.0..6.0) * scale, rng.random_range(-6.0..6.0) * scale),
            tint: [
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
            ],
        }
    }
}

/// Generates the dataset in memory.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let scale = cfg.width.min(cfg.height) as f32 / 64.0;
    let users = user_ids(cfg.num_users);
    let styles: Vec<UserStyle> = (0..cfg.num_users)
        .map(|u| UserStyle::draw(&mut stream_rng(cfg.seed, (1 << 32) + u as u64), scale))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cfg.num_users)
        .flat_map(|u| (0..cfg.trials_per_user).map(move |k| (u, k)))
        .collect();
    let trials = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(u, k))| {
            let mut rng = stream_rng(cfg.seed, i as u64 + 1);
            render_trial(cfg, &users[u], k, styles[u], scale, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { trials })
}

/// Generates the dataset and writes it under `out`.
pub fn synth_generate(cfg: &SynthConfig, out: &Path) -> Result<SynthSummary> {
    let ds = synth_dataset(cfg)?;
    ds.save(out)?;
    Ok(SynthSummary::of(&ds))
}

fn segment_plan(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut classes: Vec<usize> = (0..cfg.num_classes)
        .flat_map(|c| std::iter::repeat_n(c, cfg.segments_per_class))
        .collect();
    classes.shuffle(rng);
    // break up adjacent repeats so every segment is a visible transition
    for i in 1..classes.len() {
        if classes[i] == classes[i - 1] {
            if let Some(j) = (i + 1..classes.len()).find(|&j| classes[j] != classes[i] && classes[j] != classes[i - 1])
            {
                classes.swap(i, j);
            }
        }
    }
    classes
        .into_iter()
        .map(|c| (c, rng.random_range(cfg.min_segment_frames..=cfg.max_segment_frames)))
        .collect()
}

fn rotate(v: (f32, f32), theta: f32) -> (f32, f32) {
    let (s, c) = theta.sin_cos();
    (v.0 * c - v.1 * s, v.0 * s + v.1 * c)
}

/// Blob positions (active, passive) for `class` at phase `phi`, relative to
/// the scene centre, in 64-px units.
fn pattern(class: usize, phi: f32) -> ((f32, f32), (f32, f32)) {
    let theta = (class / 4) as f32 * PI / 3.0;
    let wave = 0.5 - 0.5 * phi.cos();
    let (active, passive) = match class % 4 {
        // approach: left blob slides toward a resting partner
        0 => ((-20.0 + 14.0 * wave, -2.0), (12.0, -2.0)),
        // crossover: blobs swap sides
        1 => ((-14.0 * phi.cos(), 6.0), (14.0 * phi.cos(), -6.0)),
        // orbit: one blob circles the other
        2 => ((12.0 * phi.cos(), 4.0 + 12.0 * phi.sin()), (0.0, 4.0)),
        // retract: right blob pulls away and returns
        _ => ((10.0, -2.0 - 16.0 * wave), (-10.0, 10.0)),
    };
    (rotate(active, theta), rotate(passive, theta))
}

fn render_trial(
    cfg: &SynthConfig,
    user: &str,
    k: usize,
    style: UserStyle,
    scale: f32,
    rng: &mut ChaCha8Rng,
) -> Result<Trial> {
    let (w, h) = (cfg.width, cfg.height);
    let plan = segment_plan(cfg, rng);
    let background = render_background(w, h, style.tint, rng);
    let noise = Normal::new(0.0f32, cfg.gaze_noise_px * scale).map_err(|e| Error::Config(e.to_string()))?;
    let centre = (w as f32 / 2.0 + style.offset.0, h as f32 / 2.0 + style.offset.1);
    let radius = 5.0 * scale;
    let period = 8.0;

    let mut segments = Vec::with_capacity(plan.len());
    let mut data = Vec::new();
    let mut gaze = Vec::new();
    let mut start = 0;
    for (class, len) in plan {
        segments.push(Segment::new(start, start + len - 1, GestureLabel::ALL[class]));
        start += len;
        let phase0: f32 = rng.random_range(0.0..2.0 * PI);
        for tau in 0..len {
            let phi = phase0 + 2.0 * PI * tau as f32 * style.speed / period;
            let (a, p) = pattern(class, phi);
            let a = (centre.0 + a.0 * scale, centre.1 + a.1 * scale);
            let p = (centre.0 + p.0 * scale, centre.1 + p.1 * scale);
            let mut frame = background.clone();
            draw_blob(&mut frame, w, h, p, radius, [70.0, 75.0, 95.0]);
            draw_blob(&mut frame, w, h, a, radius, [235.0, 235.0, 210.0]);
            for v in frame.iter_mut() {
                *v += rng.random_range(-6.0f32..6.0);
            }
            data.extend(frame.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
            let gx = a.0 + noise.sample(rng);
            let gy = a.1 + noise.sample(rng);
            gaze.push((round3(gx), round3(gy)));
        }
    }
    let trial = Trial {
        trial_id: format!("Suturing_{user}{:03}", k + 1),
        user_id: user.to_string(),
        fps: cfg.fps,
        segments,
        gaze: GazeTrack::new(gaze, w, h),
        frames: Frames::new(w, h, data)?,
    };
    trial.validate()?;
    Ok(trial)
}

fn round3(v: f32) -> f32 {
    (v * 1000.0).round() / 1000.0
}

fn render_background(w: usize, h: usize, tint: [f32; 3], rng: &mut ChaCha8Rng) -> Vec<f32> {
    let base = [170.0 + tint[0], 95.0 + tint[1], 95.0 + tint[2]];
    let waves: Vec<(f32, f32, f32, f32)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.05..0.3),
                rng.random_range(0.05..0.3),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(6.0..14.0),
            )
        })
        .collect();
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let tex: f32 = waves
                .iter()
                .map(|&(fx, fy, ph, amp)| amp * (fx * x as f32 + fy * y as f32 + ph).sin())
                .sum();
            let grain = rng.random_range(-8.0f32..8.0);
            for c in base {
                out.push(c + tex + grain);
            }
        }
    }
    out
}

fn draw_blob(frame: &mut [f32], w: usize, h: usize, at: (f32, f32), radius: f32, color: [f32; 3]) {
    let x0 = (at.0 - radius - 1.0).floor().max(0.0) as usize;
    let y0 = (at.1 - radius - 1.0).floor().max(0.0) as usize;
    let x1 = ((at.0 + radius + 1.0).ceil().max(0.0) as usize).min(w.saturating_sub(1));
    let y1 = ((at.1 + radius + 1.0).ceil().max(0.0) as usize).min(h.saturating_sub(1));
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = ((x as f32 - at.0).powi(2) + (y as f32 - at.1).powi(2)).sqrt();
            let alpha = (radius + 0.5 - d).clamp(0.0, 1.0);
            if alpha > 0.0 {
                let px = &mut frame[(y * w + x) * 3..(y * w + x) * 3 + 3];
                for (v, c) in px.iter_mut().zip(color) {
                    *v = *v * (1.0 - alpha) + c * alpha;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            num_users: 2,
            trials_per_user: 2,
            width: 32,
            height: 32,
            min_segment_frames: 4,
            max_segment_frames: 8,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(synth_dataset(&small()).unwrap(), synth_dataset(&small()).unwrap());
        let other = SynthConfig { seed: 8, ..small() };
        assert_ne!(synth_dataset(&small()).unwrap(), synth_dataset(&other).unwrap());
    }

    #[test]
    fn trials_are_contiguous_and_balanced_per_trial() {
        let ds = synth_dataset(&small()).unwrap();
        assert_eq!(ds.trials.len(), 4);
        assert_eq!(ds.users(), vec!["B".to_string(), "C".to_string()]);
        for t in &ds.trials {
            assert_eq!(t.segments.len(), 8);
            assert_eq!(t.segments[0].start_frame, 0);
            assert_eq!(t.segments.last().unwrap().end_frame + 1, t.num_frames());
            for pair in t.segments.windows(2) {
                assert_eq!(pair[0].end_frame + 1, pair[1].start_frame);
            }
            for c in 0..4 {
                assert_eq!(
                    t.segments.iter().filter(|s| s.label.class_index() == Some(c)).count(),
                    2
                );
            }
        }
    }

    #[test]
    fn disk_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let ds = synth_dataset(&small()).unwrap();
        ds.save(dir.path()).unwrap();
        assert_eq!(Dataset::load(dir.path()).unwrap(), ds);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(synth_dataset(&SynthConfig {
            num_classes: 11,
            ..small()
        })
        .is_err());
        assert!(synth_dataset(&SynthConfig {
            min_segment_frames: 9,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn ten_class_config_renders() {
        let cfg = SynthConfig {
            num_classes: 10,
            segments_per_class: 1,
            num_users: 1,
            trials_per_user: 1,
            ..small()
        };
        let ds = synth_dataset(&cfg).unwrap();
        assert_eq!(SynthSummary::of(&ds).class_frames.len(), 10);
    }
}
