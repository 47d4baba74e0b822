use ndarray::{s, Array4};

use super::gesture::GestureLabel;
use super::trial::Trial;

/// Frame indices and label of one sliding window; frames are materialized
/// on demand with [`Clip::extract`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipWindow {
    pub end_frame: usize,
    pub label: GestureLabel,
    pub frame_indices: Vec<usize>,
}

/// Indices `[end-len+1, end]`; positions before frame 0 repeat frame 0.
pub fn window_indices(end: usize, len: usize) -> Vec<usize> {
    (0..len).map(|k| (end + k + 1).saturating_sub(len)).collect()
}

/// One window per labeled frame, labeled by its last frame.
pub fn make_windows(timeline: &[GestureLabel], len: usize) -> Vec<ClipWindow> {
    assert!(len >= 1, "window length must be positive");
    timeline
        .iter()
        .enumerate()
        .filter(|(_, l)| l.is_labeled())
        .map(|(t, &label)| ClipWindow {
            end_frame: t,
            label,
            frame_indices: window_indices(t, len),
        })
        .collect()
}

/// A window of `T` frames with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    /// `(T, H, W, 3)`
    pub frames: Array4<f32>,
    /// `(x, y)` in pixels, one per frame.
    pub gaze: Vec<(f32, f32)>,
    pub label: GestureLabel,
    pub end_frame_index: usize,
}

impl Clip {
    pub fn extract(trial: &Trial, window: &ClipWindow) -> Clip {
        let (h, w) = (trial.frames.height(), trial.frames.width());
        let mut frames = Array4::<f32>::zeros((window.frame_indices.len(), h, w, 3));
        for (k, &i) in window.frame_indices.iter().enumerate() {
            frames
                .slice_mut(s![k, .., .., ..])
                .assign(&trial.frames.frame(i).mapv(|v| v as f32 / 255.0));
        }
        Clip {
            frames,
            gaze: window.frame_indices.iter().map(|&i| trial.gaze.points[i]).collect(),
            label: window.label,
            end_frame_index: window.end_frame,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All clips of a trial, materialized lazily.
pub fn clips(trial: &Trial, len: usize) -> impl Iterator<Item = Clip> + '_ {
    make_windows(&trial.timeline(), len)
        .into_iter()
        .map(move |w| Clip::extract(trial, &w))
}
