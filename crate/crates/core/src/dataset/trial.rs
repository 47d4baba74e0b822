use std::fs;
use std::path::{Path, PathBuf};

use super::frames::{Frames, RAW_MANIFEST_FILE};
use super::gaze::{format_gaze_csv, parse_gaze_csv, GazeTrack};
use super::gesture::{GestureLabel, GestureTimeline};
use super::transcription::{
    format_transcription, parse_transcription, segments_from_timeline, timeline_from_segments, Segment,
};
use crate::error::{Error, Result};

pub const TRIAL_INDEX_FILE: &str = "trials.csv";
pub const TRANSCRIPTION_FILE: &str = "transcription.txt";
pub const GAZE_FILE: &str = "gaze.csv";
pub const PNG_FRAMES_DIR: &str = "frames";

/// One recorded performance: frames, gesture annotation and gaze track.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub trial_id: String,
    pub user_id: String,
    pub fps: u32,
    pub segments: Vec<Segment>,
    pub gaze: GazeTrack,
    pub frames: Frames,
}

impl Trial {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gaze.len() != self.num_frames() {
            return Err(Error::Validation(format!(
                "trial {}: gaze track has {} points for {} frames",
                self.trial_id,
                self.gaze.len(),
                self.num_frames()
            )));
        }
        timeline_from_segments(&self.segments, self.num_frames())
            .map_err(|e| Error::Validation(format!("trial {}: {e}", self.trial_id)))?;
        Ok(())
    }

    pub fn timeline(&self) -> GestureTimeline {
        timeline_from_segments(&self.segments, self.num_frames()).expect("validated at construction")
    }

    /// Resamples frames, labels and gaze from `self.fps` to `dst_fps`.
    pub fn subsample(&self, dst_fps: u32) -> Result<Trial> {
        let stride = subsample_stride(self.fps, dst_fps)?;
        let (timeline, gaze) = subsample_timeline(&self.timeline(), &self.gaze, self.fps, dst_fps)?;
        Ok(Trial {
            trial_id: self.trial_id.clone(),
            user_id: self.user_id.clone(),
            fps: dst_fps,
            segments: segments_from_timeline(&timeline),
            gaze,
            frames: self.frames.select((0..self.num_frames()).step_by(stride)),
        })
    }
}

fn subsample_stride(src_fps: u32, dst_fps: u32) -> Result<usize> {
    if dst_fps == 0 || src_fps == 0 || !src_fps.is_multiple_of(dst_fps) {
        return Err(Error::Config(format!(
            "cannot subsample {src_fps} fps to {dst_fps} fps with a uniform stride"
        )));
    }
    Ok((src_fps / dst_fps) as usize)
}

/// Keeps every `src_fps/dst_fps`-th entry starting at index 0, applied to
/// labels and gaze alike.
pub fn subsample_timeline(
    timeline: &[GestureLabel],
    gaze: &GazeTrack,
    src_fps: u32,
    dst_fps: u32,
) -> Result<(GestureTimeline, GazeTrack)> {
    let stride = subsample_stride(src_fps, dst_fps)?;
    let labels = timeline.iter().copied().step_by(stride).collect();
    let points = gaze.points.iter().copied().step_by(stride).collect();
    Ok((
        labels,
        GazeTrack {
            points,
            frame_width: gaze.frame_width,
            frame_height: gaze.frame_height,
        },
    ))
}

/// Row of the dataset index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialIndexEntry {
    pub trial_id: String,
    pub user_id: String,
    pub fps: u32,
    pub num_frames: usize,
}

pub fn parse_trial_index(text: &str) -> Result<Vec<TrialIndexEntry>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "trial_id,user_id,fps,num_frames" => {}
        Some((i, _)) => {
            return Err(Error::parse(
                i + 1,
                "expected header \"trial_id,user_id,fps,num_frames\"",
            ))
        }
        None => return Err(Error::parse(1, "missing header")),
    }
    let mut out: Vec<TrialIndexEntry> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [trial_id, user_id, fps, num_frames] = fields[..] else {
            return Err(Error::parse(
                lineno,
                format!("expected 4 columns, found {}", fields.len()),
            ));
        };
        let valid_id = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !valid_id(trial_id) || !valid_id(user_id) {
            return Err(Error::parse(lineno, "ids must be non-empty [A-Za-z0-9_-]"));
        }
        if out.iter().any(|e| e.trial_id == trial_id) {
            return Err(Error::parse(lineno, format!("duplicate trial {trial_id}")));
        }
        out.push(TrialIndexEntry {
            trial_id: trial_id.to_string(),
            user_id: user_id.to_string(),
            fps: fps
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad fps {fps:?}")))?,
            num_frames: num_frames
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad frame count {num_frames:?}")))?,
        });
    }
    Ok(out)
}

pub fn format_trial_index(entries: &[TrialIndexEntry]) -> String {
    let mut out = String::from("trial_id,user_id,fps,num_frames\n");
    for e in entries {
        out.push_str(&format!("{},{},{},{}\n", e.trial_id, e.user_id, e.fps, e.num_frames));
    }
    out
}

/// A set of trials persisted as one directory per trial plus `trials.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub trials: Vec<Trial>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let entries = parse_trial_index(&read_text(&root.join(TRIAL_INDEX_FILE))?)?;
        let mut trials = Vec::with_capacity(entries.len());
        for e in entries {
            let dir = root.join(&e.trial_id);
            trials.push(load_trial(&dir, &e)?);
        }
        Ok(Self { trials })
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let mut entries = Vec::new();
        for t in &self.trials {
            let dir = trial_dir(root, &t.trial_id);
            save_trial(&dir, t)?;
            entries.push(TrialIndexEntry {
                trial_id: t.trial_id.clone(),
                user_id: t.user_id.clone(),
                fps: t.fps,
                num_frames: t.num_frames(),
            });
        }
        write_text(&root.join(TRIAL_INDEX_FILE), &format_trial_index(&entries))
    }

    pub fn users(&self) -> Vec<String> {
        let mut users: Vec<String> = self.trials.iter().map(|t| t.user_id.clone()).collect();
        users.sort();
        users.dedup();
        users
    }

    pub fn subsample(&self, dst_fps: u32) -> Result<Self> {
        Ok(Self {
            trials: self
                .trials
                .iter()
                .map(|t| t.subsample(dst_fps))
                .collect::<Result<_>>()?,
        })
    }

    pub fn trial(&self, id: &str) -> Option<&Trial> {
        self.trials.iter().find(|t| t.trial_id == id)
    }
}

fn trial_dir(root: &Path, id: &str) -> PathBuf {
    root.join(id)
}

pub fn load_trial(dir: &Path, entry: &TrialIndexEntry) -> Result<Trial> {
    let frames = if dir.join(RAW_MANIFEST_FILE).exists() {
        Frames::read_raw(dir)?
    } else {
        Frames::read_png_dir(&dir.join(PNG_FRAMES_DIR))?
    };
    if frames.len() != entry.num_frames {
        return Err(Error::Validation(format!(
            "trial {}: index lists {} frames, found {}",
            entry.trial_id,
            entry.num_frames,
            frames.len()
        )));
    }
    let segments = parse_transcription(&read_text(&dir.join(TRANSCRIPTION_FILE))?)?;
    let gaze = parse_gaze_csv(&read_text(&dir.join(GAZE_FILE))?, frames.width(), frames.height())?;
    let trial = Trial {
        trial_id: entry.trial_id.clone(),
        user_id: entry.user_id.clone(),
        fps: entry.fps,
        segments,
        gaze,
        frames,
    };
    trial.validate()?;
    Ok(trial)
}

fn save_trial(dir: &Path, t: &Trial) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(TRANSCRIPTION_FILE), &format_transcription(&t.segments))?;
    write_text(&dir.join(GAZE_FILE), &format_gaze_csv(&t.gaze))?;
    t.frames.write_raw(dir)
}
