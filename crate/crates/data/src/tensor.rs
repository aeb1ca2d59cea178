//! Image/annotation to tensor conversions for the network input.

use gop_core::BoundingBox;
use image::RgbImage;
use ndarray::{Array2, Array3};

/// `(3, H, W)` float image, channels first, values centered to `[-0.5, 0.5]`.
pub fn image_to_array(img: &RgbImage) -> Array3<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Array3::zeros((3, h, w));
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            out[(c, y as usize, x as usize)] = px.0[c] as f32 / 255.0 - 0.5;
        }
    }
    out
}

/// Binary head-location mask at image resolution: 1 inside the head box.
pub fn head_mask(head_box: &BoundingBox, image_size: u32) -> Array2<f32> {
    let n = image_size as usize;
    Array2::from_shape_fn((n, n), |(y, x)| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        if fx >= head_box.x1 && fx < head_box.x2 && fy >= head_box.y1 && fy < head_box.y2 {
            1.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_covers_the_head_box() {
        let b = BoundingBox::new(10.0, 20.0, 30.0, 50.0, 0).unwrap();
        let m = head_mask(&b, 64);
        assert_eq!(m[(30, 20)], 1.0);
        assert_eq!(m[(10, 20)], 0.0);
        let area: f32 = m.sum();
        assert_eq!(area, (20 * 30) as f32);
    }

    #[test]
    fn image_conversion_centers_values() {
        let mut img = RgbImage::new(4, 4);
        img.put_pixel(1, 2, image::Rgb([255, 0, 128]));
        let a = image_to_array(&img);
        assert_eq!(a[(0, 2, 1)], 0.5);
        assert_eq!(a[(1, 2, 1)], -0.5);
        assert!((a[(2, 2, 1)] - (128.0 / 255.0 - 0.5)) < 1e-6);
    }
}
