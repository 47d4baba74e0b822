//! Gaze fixations rendered as per-timestamp supervision heatmaps at the
//! attention map's resolution.

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::real::{lit, Real};

/// Handling of fixations that fall outside the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfFrame {
    /// Move the fixation to the nearest border cell.
    #[default]
    Clamp,
    /// Emit an all-zero map, which contributes nothing to the loss.
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapConfig {
    /// Gaussian standard deviation in attention-grid cells.
    pub sigma: f64,
    pub out_of_frame: OutOfFrame,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            sigma: 1.5,
            out_of_frame: OutOfFrame::Clamp,
        }
    }
}

/// `T×h×w` supervision target; every non-skipped timestamp sums to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GazeHeatmap<T> {
    pub values: Array3<T>,
    pub sigma: f64,
}

/// Mirrors a horizontal pixel coordinate: `x ↦ W − 1 − x`.
pub fn flip_gaze(x: f32, frame_w: usize) -> f32 {
    frame_w as f32 - 1.0 - x
}

/// Maps a pixel coordinate onto a grid of `cells` cells spanning `pixels`
/// pixels (pixel centres to cell centres), clamped to the grid.
pub fn to_grid(v: f64, pixels: usize, cells: usize) -> f64 {
    let v = v.clamp(0.0, pixels.saturating_sub(1) as f64);
    ((v + 0.5) * cells as f64 / pixels as f64 - 0.5).clamp(0.0, cells.saturating_sub(1) as f64)
}

fn in_frame(gx: f64, gy: f64, w: usize, h: usize) -> bool {
    gx >= 0.0 && gy >= 0.0 && gx <= (w - 1) as f64 && gy <= (h - 1) as f64
}

/// Renders a normalized Gaussian centred on the rescaled fixation.
pub fn gaze_to_heatmap<T: Real>(
    gx: f64,
    gy: f64,
    frame_w: usize,
    frame_h: usize,
    target_w: usize,
    target_h: usize,
    sigma: f64,
) -> Result<Array2<T>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("heatmap sigma must be positive, got {sigma}")));
    }
    if frame_w == 0 || frame_h == 0 || target_w == 0 || target_h == 0 {
        return Err(Error::Config("heatmap dimensions must be positive".into()));
    }
    let cx = to_grid(if gx.is_nan() { 0.0 } else { gx }, frame_w, target_w);
    let cy = to_grid(if gy.is_nan() { 0.0 } else { gy }, frame_h, target_h);
    let denom = 2.0 * sigma * sigma;
    let raw = Array2::from_shape_fn((target_h, target_w), |(i, j)| {
        (-((i as f64 - cy).powi(2) + (j as f64 - cx).powi(2)) / denom).exp()
    });
    let total = raw.sum();
    Ok(raw.mapv(|v| lit(v / total)))
}

/// Stacks heatmaps for every attention timestamp.
///
/// When the attention map is temporally strided (`attn_t < T`), stride
/// `s = T / attn_t` must be integral and timestamp `k` takes the gaze of
/// clip frame `s·k + s/2`.
pub fn heatmap_volume<T: Real>(
    gaze: &[(f32, f32)],
    frame_w: usize,
    frame_h: usize,
    attn_dims: (usize, usize, usize),
    cfg: &HeatmapConfig,
) -> Result<GazeHeatmap<T>> {
    let (attn_t, h, w) = attn_dims;
    let indices = temporal_gaze_indices(gaze.len(), attn_t)?;
    let mut values = Array3::<T>::zeros((attn_t, h, w));
    for (mut slot, i) in values.axis_iter_mut(Axis(0)).zip(indices) {
        let (gx, gy) = (gaze[i].0 as f64, gaze[i].1 as f64);
        if cfg.out_of_frame == OutOfFrame::Skip && !in_frame(gx, gy, frame_w, frame_h) {
            continue;
        }
        slot.assign(&gaze_to_heatmap::<T>(gx, gy, frame_w, frame_h, w, h, cfg.sigma)?);
    }
    Ok(GazeHeatmap {
        values,
        sigma: cfg.sigma,
    })
}

/// Clip frame whose gaze supervises each attention timestamp.
pub fn temporal_gaze_indices(clip_len: usize, attn_t: usize) -> Result<Vec<usize>> {
    if attn_t == 0 || clip_len == 0 || !clip_len.is_multiple_of(attn_t) {
        return Err(Error::Validation(format!(
            "cannot align {attn_t} attention timestamps with a {clip_len}-frame clip"
        )));
    }
    let s = clip_len / attn_t;
    Ok((0..attn_t).map(|k| s * k + s / 2).collect())
}

/// Gaze positions of each attention timestamp in grid coordinates `(x, y)`.
pub fn grid_gaze(
    gaze: &[(f32, f32)],
    frame_w: usize,
    frame_h: usize,
    attn_dims: (usize, usize, usize),
) -> Result<Vec<(f64, f64)>> {
    let (attn_t, h, w) = attn_dims;
    Ok(temporal_gaze_indices(gaze.len(), attn_t)?
        .into_iter()
        .map(|i| {
            (
                to_grid(gaze[i].0 as f64, frame_w, w),
                to_grid(gaze[i].1 as f64, frame_h, h),
            )
        })
        .collect())
}
