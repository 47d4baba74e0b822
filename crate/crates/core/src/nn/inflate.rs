use ndarray::{Array4, Array5, Axis};

use crate::error::{Error, Result};
use crate::real::{lit, Real};

/// Bootstraps a 3D filter from a 2D one: the `(C_out, C_in, kH, kW)` kernel
/// is repeated `n` times along a new temporal axis and divided by `n`, so a
/// temporally constant input produces the 2D response.
pub fn inflate_2d<T: Real>(filter: &Array4<T>, n: usize) -> Result<Array5<T>> {
    if n < 1 {
        return Err(Error::Config("inflation depth must be at least 1".into()));
    }
    let slice = filter.mapv(|v| v / lit::<T>(n as f64));
    let (co, ci, kh, kw) = filter.dim();
    let mut out = Array5::zeros((co, ci, n, kh, kw));
    for mut t in out.axis_iter_mut(Axis(2)) {
        t.assign(&slice);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_filter_splits_evenly() {
        let f = Array4::from_elem((1, 1, 1, 1), 0.9f64);
        let g = inflate_2d(&f, 3).unwrap();
        assert_eq!(g.shape(), &[1, 1, 3, 1, 1]);
        for v in g.iter() {
            assert!((v - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn depth_one_is_identity() {
        let f = Array4::from_shape_fn((2, 3, 3, 3), |(a, b, c, d)| (a + 2 * b + 3 * c + 5 * d) as f32 * 0.1);
        let g = inflate_2d(&f, 1).unwrap();
        assert_eq!(g.index_axis(Axis(2), 0), f);
    }

    #[test]
    fn temporal_sum_recovers_filter() {
        // powers of two divide exactly
        let f = Array4::from_shape_fn((2, 2, 3, 3), |(a, b, c, d)| {
            (a as f64 - b as f64) * 0.75 + (c * d) as f64
        });
        for n in [1usize, 2, 4, 8] {
            let g = inflate_2d(&f, n).unwrap();
            assert_eq!(g.sum_axis(Axis(2)), f);
        }
    }

    #[test]
    fn zero_depth_is_rejected() {
        let f = Array4::<f64>::zeros((1, 1, 1, 1));
        assert!(matches!(inflate_2d(&f, 0), Err(Error::Config(_))));
    }
}
