//! Channel-to-space rearrangement (`defocus`) and its exact inverse
//! (`focus`).
//!
//! `defocus` shrinks the channel dimension by `r^2` and enlarges both
//! spatial dimensions by `r` without touching any value: it is a pure
//! permutation, so it costs no multiply-accumulates and loses no
//! information. Sub-pixel order is block-row-major:
//!
//! `out[c, r*i + di, r*j + dj] = in[c*r^2 + di*r + dj, i, j]`

use ndarray::{Array3, ArrayView3};

use crate::CoreError;

/// Rearranges `(C, H, W)` into `(C / r^2, r*H, r*W)`.
pub fn defocus<T: Copy + Default>(x: &ArrayView3<'_, T>, r: usize) -> Result<Array3<T>, CoreError> {
    if r < 2 {
        return Err(CoreError::InvalidRatio(r));
    }
    let (c, h, w) = x.dim();
    let r2 = r * r;
    if c % r2 != 0 {
        return Err(CoreError::ChannelsNotDivisible {
            channels: c,
            r_squared: r2,
        });
    }
    let co = c / r2;
    let mut out = Array3::default((co, h * r, w * r));
    for oc in 0..co {
        for di in 0..r {
            for dj in 0..r {
                let ic = oc * r2 + di * r + dj;
                for i in 0..h {
                    for j in 0..w {
                        out[(oc, r * i + di, r * j + dj)] = x[(ic, i, j)];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`defocus`]: `(C, H, W)` into `(C * r^2, H/r, W/r)`.
pub fn focus<T: Copy + Default>(y: &ArrayView3<'_, T>, r: usize) -> Result<Array3<T>, CoreError> {
    if r < 2 {
        return Err(CoreError::InvalidRatio(r));
    }
    let (c, h, w) = y.dim();
    if h % r != 0 || w % r != 0 {
        return Err(CoreError::SpatialNotDivisible { h, w, r });
    }
    let (hi, wi) = (h / r, w / r);
    let mut out = Array3::default((c * r * r, hi, wi));
    for oc in 0..c {
        for di in 0..r {
            for dj in 0..r {
                let ic = oc * r * r + di * r + dj;
                for i in 0..hi {
                    for j in 0..wi {
                        out[(ic, i, j)] = y[(oc, r * i + di, r * j + dj)];
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn four_channel_single_pixel() {
        // values [A, B, C, D] land as [[A, B], [C, D]]
        let x = Array3::from_shape_vec((4, 1, 1), vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let y = defocus(&x.view(), 2).unwrap();
        assert_eq!(y.dim(), (1, 2, 2));
        assert_eq!(y[(0, 0, 0)], 1.0);
        assert_eq!(y[(0, 0, 1)], 2.0);
        assert_eq!(y[(0, 1, 0)], 3.0);
        assert_eq!(y[(0, 1, 1)], 4.0);
        let back = focus(&y.view(), 2).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn index_formula_cell_by_cell() {
        let x = Array3::from_shape_fn((4, 2, 2), |(k, i, j)| (100 * k + 10 * i + j) as f64);
        let y = defocus(&x.view(), 2).unwrap();
        assert_eq!(y.dim(), (1, 4, 4));
        for i in 0..2 {
            for j in 0..2 {
                for di in 0..2 {
                    for dj in 0..2 {
                        let expected = x[(di * 2 + dj, i, j)];
                        assert_eq!(y[(0, 2 * i + di, 2 * j + dj)], expected);
                    }
                }
            }
        }
    }

    #[test]
    fn shape_arithmetic() {
        let x = Array3::<f32>::zeros((2048, 7, 7));
        let y = defocus(&x.view(), 2).unwrap();
        assert_eq!(y.dim(), (512, 14, 14));
        let z = focus(&y.view(), 2).unwrap();
        assert_eq!(z.dim(), (2048, 7, 7));
    }

    #[test]
    fn rejects_bad_shapes_and_ratio() {
        let x = Array3::<f32>::zeros((6, 3, 3));
        assert!(matches!(
            defocus(&x.view(), 2),
            Err(CoreError::ChannelsNotDivisible { .. })
        ));
        assert!(matches!(defocus(&x.view(), 1), Err(CoreError::InvalidRatio(1))));
        let y = Array3::<f32>::zeros((1, 3, 4));
        assert!(matches!(
            focus(&y.view(), 2),
            Err(CoreError::SpatialNotDivisible { .. })
        ));
    }

    #[test]
    fn preserves_value_multiset() {
        let x = Array3::from_shape_fn((8, 3, 5), |(k, i, j)| (k * 1000 + i * 10 + j) as i64);
        let y = defocus(&x.view(), 2).unwrap();
        let mut before: Vec<i64> = x.iter().copied().collect();
        let mut after: Vec<i64> = y.iter().copied().collect();
        before.sort_unstable();
        after.sort_unstable();
        assert_eq!(before, after);
    }
}
