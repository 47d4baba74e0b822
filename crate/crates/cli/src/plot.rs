//! PNG rendering of prediction timelines and attention overlays.

use gazeattn::dataset::GestureLabel;
use image::{Rgb, RgbImage};

use crate::font::{draw_text, text_width, GLYPH_H};

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([20, 20, 20]);

/// Fixed gesture colors, shared by every ribbon so figures are comparable:
///
/// | label | color     |
/// |-------|-----------|
/// | G1    | `#1f77b4` |
/// | G2    | `#ff7f0e` |
/// | G3    | `#2ca02c` |
/// | G4    | `#d62728` |
/// | G5    | `#9467bd` |
/// | G6    | `#8c564b` |
/// | G8    | `#e377c2` |
/// | G9    | `#7f7f7f` |
/// | G10   | `#bcbd22` |
/// | G11   | `#17becf` |
/// | U     | `#e6e6e6` |
pub fn gesture_color(label: GestureLabel) -> Rgb<u8> {
    use GestureLabel::*;
    Rgb(match label {
        G1 => [0x1f, 0x77, 0xb4],
        G2 => [0xff, 0x7f, 0x0e],
        G3 => [0x2c, 0xa0, 0x2c],
        G4 => [0xd6, 0x27, 0x28],
        G5 => [0x94, 0x67, 0xbd],
        G6 => [0x8c, 0x56, 0x4b],
        G8 => [0xe3, 0x77, 0xc2],
        G9 => [0x7f, 0x7f, 0x7f],
        G10 => [0xbc, 0xbd, 0x22],
        G11 => [0x17, 0xbe, 0xcf],
        Unlabeled => [0xe6, 0xe6, 0xe6],
    })
}

fn fill_rect(img: &mut RgbImage, x: u32, y: u32, w: u32, h: u32, c: Rgb<u8>) {
    for py in y..(y + h).min(img.height()) {
        for px in x..(x + w).min(img.width()) {
            img.put_pixel(px, py, c);
        }
    }
}

/// Ground truth band above the prediction band, with a legend of every
/// label that occurs in either.
pub fn timeline_ribbon(gt: &[GestureLabel], pred: &[GestureLabel]) -> RgbImage {
    const SCALE: u32 = 2;
    const BAND_H: u32 = 28;
    const GAP: u32 = 6;
    const MARGIN: u32 = 8;
    let n = gt.len().max(pred.len()).max(1) as u32;
    let per_frame = (800 / n).clamp(1, 8);
    let label_w = text_width("PRED", SCALE) + MARGIN;
    let text_h = GLYPH_H * SCALE;

    let mut present: Vec<GestureLabel> = gt.iter().chain(pred).copied().collect();
    present.sort();
    present.dedup();
    let entry_w: Vec<u32> = present
        .iter()
        .map(|l| text_h + 4 + text_width(l.as_str(), SCALE) + 12)
        .collect();

    let band_w = n * per_frame;
    let width = (MARGIN + label_w + band_w + MARGIN).max(MARGIN * 2 + entry_w.iter().sum::<u32>());
    let legend_y = MARGIN + 2 * BAND_H + GAP + 2 * MARGIN;
    let height = legend_y + text_h + MARGIN;
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);

    let x0 = MARGIN + label_w;
    for (row, (name, seq)) in [("GT", gt), ("PRED", pred)].into_iter().enumerate() {
        let y = MARGIN + row as u32 * (BAND_H + GAP);
        draw_text(&mut img, MARGIN, y + (BAND_H - text_h) / 2, name, SCALE, INK);
        for (i, &l) in seq.iter().enumerate() {
            fill_rect(
                &mut img,
                x0 + i as u32 * per_frame,
                y,
                per_frame,
                BAND_H,
                gesture_color(l),
            );
        }
    }

    let mut x = MARGIN;
    for (l, w) in present.iter().zip(entry_w) {
        fill_rect(&mut img, x, legend_y, text_h, text_h, gesture_color(*l));
        draw_text(&mut img, x + text_h + 4, legend_y, l.as_str(), SCALE, INK);
        x += w;
    }
    img
}

/// One frame with a heat map blended on top.
pub struct Overlay<'a> {
    /// `(H, W, 3)` row-major pixels.
    pub frame: &'a [u8],
    /// Row-major map of size `map_h x map_w`; normalized by its maximum.
    pub map: &'a [f32],
}

fn blend(o: &Overlay<'_>, (fh, fw): (usize, usize), (mh, mw): (usize, usize), tint: [f32; 3], zoom: u32) -> RgbImage {
    let (frame, map) = (o.frame, o.map);
    let peak = map.iter().copied().fold(0.0f32, f32::max);
    let mut img = RgbImage::new(fw as u32 * zoom, fh as u32 * zoom);
    for y in 0..fh {
        for x in 0..fw {
            let v = if peak > 0.0 {
                map[(y * mh / fh) * mw + x * mw / fw] / peak
            } else {
                0.0
            };
            let alpha = 0.7 * v;
            let p = &frame[(y * fw + x) * 3..(y * fw + x) * 3 + 3];
            let c = Rgb([0, 1, 2].map(|k| ((1.0 - alpha) * p[k] as f32 + alpha * tint[k]).round() as u8));
            fill_rect(&mut img, x as u32 * zoom, y as u32 * zoom, zoom, zoom, c);
        }
    }
    img
}

/// Grid of overlays: the gaze target row above the learned attention row,
/// one column per attention timestamp.
pub fn attention_grid(
    frame_dims: (usize, usize),
    map_dims: (usize, usize),
    gaze_row: &[Overlay<'_>],
    attention_row: &[Overlay<'_>],
) -> RgbImage {
    const ZOOM: u32 = 3;
    const PAD: u32 = 4;
    const SCALE: u32 = 2;
    let (fh, fw) = frame_dims;
    let cols = gaze_row.len().max(attention_row.len()) as u32;
    let label_w = text_width("GAZE", SCALE) + 2 * PAD;
    let tile_w = fw as u32 * ZOOM;
    let tile_h = fh as u32 * ZOOM;
    let mut img = RgbImage::from_pixel(
        label_w + cols * (tile_w + PAD) + PAD,
        2 * (tile_h + PAD) + PAD,
        BACKGROUND,
    );
    let rows = [
        ("GAZE", gaze_row, [40.0, 220.0, 60.0]),
        ("ATTN", attention_row, [255.0, 40.0, 20.0]),
    ];
    for (r, (name, row, tint)) in rows.into_iter().enumerate() {
        let y = PAD + r as u32 * (tile_h + PAD);
        draw_text(&mut img, PAD, y + tile_h / 2, name, SCALE, INK);
        for (c, o) in row.iter().enumerate() {
            let tile = blend(o, frame_dims, map_dims, tint, ZOOM);
            image::imageops::replace(&mut img, &tile, (label_w + c as u32 * (tile_w + PAD)) as i64, y as i64);
        }
    }
    img
}
