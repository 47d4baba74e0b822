use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-frame fixation coordinates in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeTrack {
    pub points: Vec<(f32, f32)>,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl GazeTrack {
    /// Builds a track, clamping every point into the frame.
    pub fn new(points: Vec<(f32, f32)>, frame_width: usize, frame_height: usize) -> Self {
        let mut track = Self {
            points,
            frame_width,
            frame_height,
        };
        track.clamp();
        track
    }

    pub fn clamp(&mut self) {
        let xmax = self.frame_width.saturating_sub(1) as f32;
        let ymax = self.frame_height.saturating_sub(1) as f32;
        for p in &mut self.points {
            p.0 = clamp_or_zero(p.0, xmax);
            p.1 = clamp_or_zero(p.1, ymax);
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn clamp_or_zero(v: f32, max: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, max)
    }
}

/// Parses a `frame,x,y` CSV with header. Rows must be numbered 0, 1, 2, …
pub fn parse_gaze_csv(text: &str, frame_width: usize, frame_height: usize) -> Result<GazeTrack> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim().replace(' ', "") == "frame,x,y" => {}
        Some((i, _)) => return Err(Error::parse(i + 1, "expected header \"frame,x,y\"")),
        None => return Err(Error::parse(1, "missing header")),
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [frame, x, y] = fields[..] else {
            return Err(Error::parse(
                lineno,
                format!("expected 3 columns, found {}", fields.len()),
            ));
        };
        let frame: usize = frame
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad frame index {frame:?}")))?;
        if frame != points.len() {
            return Err(Error::parse(
                lineno,
                format!("frame index {frame} out of sequence (expected {})", points.len()),
            ));
        }
        let x: f32 = x.parse().map_err(|_| Error::parse(lineno, format!("bad x {x:?}")))?;
        let y: f32 = y.parse().map_err(|_| Error::parse(lineno, format!("bad y {y:?}")))?;
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::parse(lineno, "non-finite coordinate"));
        }
        points.push((x, y));
    }
    Ok(GazeTrack::new(points, frame_width, frame_height))
}

pub fn format_gaze_csv(track: &GazeTrack) -> String {
    let mut out = String::from("frame,x,y\n");
    for (i, (x, y)) in track.points.iter().enumerate() {
        let _ = writeln!(out, "{i},{x:.3},{y:.3}");
    }
    out
}
