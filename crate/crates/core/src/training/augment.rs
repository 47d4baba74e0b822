use ndarray::{s, Axis};
use rand::Rng;

use crate::dataset::Clip;
use crate::gaze_supervision::flip_gaze;

/// Mirrors every frame horizontally and moves the gaze with it.
pub fn flip_clip(clip: &Clip) -> Clip {
    let width = clip.frames.len_of(Axis(2));
    Clip {
        frames: clip.frames.slice(s![.., .., ..;-1, ..]).to_owned(),
        gaze: clip.gaze.iter().map(|&(x, y)| (flip_gaze(x, width), y)).collect(),
        label: clip.label,
        end_frame_index: clip.end_frame_index,
    }
}

/// Flips the clip with probability `flip_prob`.
pub fn augment<R: Rng + ?Sized>(clip: Clip, flip_prob: f64, rng: &mut R) -> Clip {
    if rng.random::<f64>() < flip_prob {
        flip_clip(&clip)
    } else {
        clip
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::GestureLabel;
    use crate::gaze_supervision::gaze_to_heatmap;
    use ndarray::Array4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clip() -> Clip {
        Clip {
            frames: Array4::from_shape_fn((2, 4, 6, 3), |(t, h, w, c)| (t * 100 + h * 10 + w + c) as f32 / 255.0),
            gaze: vec![(1.0, 2.0), (4.5, 0.0)],
            label: GestureLabel::G2,
            end_frame_index: 9,
        }
    }

    #[test]
    fn double_flip_is_identity() {
        let c = clip();
        let f = flip_clip(&c);
        assert_eq!(f.frames[[0, 1, 0, 2]], c.frames[[0, 1, 5, 2]]);
        assert_eq!(f.gaze[0], (4.0, 2.0));
        assert_eq!(flip_clip(&f), c);
    }

    #[test]
    fn probability_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(clip(), 0.0, &mut rng), clip());
        assert_eq!(augment(clip(), 1.0, &mut rng), flip_clip(&clip()));
    }

    #[test]
    fn flipped_heatmap_is_mirrored() {
        let c = clip();
        let f = flip_clip(&c);
        for (a, b) in c.gaze.iter().zip(&f.gaze) {
            let ha = gaze_to_heatmap::<f64>(a.0 as f64, a.1 as f64, 6, 4, 6, 4, 1.0).unwrap();
            let hb = gaze_to_heatmap::<f64>(b.0 as f64, b.1 as f64, 6, 4, 6, 4, 1.0).unwrap();
            let mirrored = ha.slice(s![.., ..;-1]);
            for (p, q) in mirrored.iter().zip(hb.iter()) {
                assert!((p - q).abs() < 1e-6);
            }
        }
    }
}
