//! Small drawing primitives on RGB images.

use image::{Rgb, RgbImage};

pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> Rgb<u8> {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    Rgb([
        ((r + m) * 255.0) as u8,
        ((g + m) * 255.0) as u8,
        ((b + m) * 255.0) as u8,
    ])
}

pub fn fill_rect(img: &mut RgbImage, x1: i32, y1: i32, x2: i32, y2: i32, color: Rgb<u8>) {
    let (w, h) = (img.width() as i32, img.height() as i32);
    for y in y1.max(0)..y2.min(h) {
        for x in x1.max(0)..x2.min(w) {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

pub fn draw_rect_outline(
    img: &mut RgbImage,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    color: Rgb<u8>,
    thickness: i32,
) {
    let (x1, y1, x2, y2) = (x1 as i32, y1 as i32, x2 as i32, y2 as i32);
    fill_rect(img, x1, y1, x2, y1 + thickness, color);
    fill_rect(img, x1, y2 - thickness, x2, y2, color);
    fill_rect(img, x1, y1, x1 + thickness, y2, color);
    fill_rect(img, x2 - thickness, y1, x2, y2, color);
}

pub fn draw_disk(img: &mut RgbImage, cx: f64, cy: f64, radius: f64, color: Rgb<u8>) {
    let r2 = radius * radius;
    let (w, h) = (img.width() as i32, img.height() as i32);
    let x_lo = ((cx - radius).floor() as i32).max(0);
    let x_hi = ((cx + radius).ceil() as i32).min(w - 1);
    let y_lo = ((cy - radius).floor() as i32).max(0);
    let y_hi = ((cy + radius).ceil() as i32).min(h - 1);
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= r2 {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

/// Thick line segment, stamped as disks along the segment.
pub fn draw_line(
    img: &mut RgbImage,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    width: f64,
    color: Rgb<u8>,
) {
    let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt().max(1e-6);
    let steps = (len * 2.0).ceil() as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        draw_disk(
            img,
            x0 + t * (x1 - x0),
            y0 + t * (y1 - y0),
            width / 2.0,
            color,
        );
    }
}

/// Grayscale rendering of a heatmap with linear min-max scaling, so the
/// peak always lands at full intensity.
pub fn heatmap_to_image(hm: &ndarray::ArrayView2<'_, f64>) -> image::GrayImage {
    let (h, w) = hm.dim();
    let lo = hm.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = hm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = (hm[(y as usize, x as usize)] - lo) / span;
        image::Luma([(v * 255.0).round() as u8])
    })
}

/// Scene with the (min-max normalized, bilinearly stretched) heatmap
/// blended into the red channel.
pub fn overlay_heatmap(scene: &RgbImage, hm: &ndarray::ArrayView2<'_, f64>) -> RgbImage {
    let (sw, sh) = (scene.width(), scene.height());
    let gray = heatmap_to_image(hm);
    let resized = image::imageops::resize(&gray, sw, sh, image::imageops::FilterType::Triangle);
    let mut out = scene.clone();
    for y in 0..sh {
        for x in 0..sw {
            let base = out.get_pixel(x, y).0;
            let heat = resized.get_pixel(x, y).0[0] as f64 / 255.0;
            let blend = |c: u8, target: f64| -> u8 {
                (c as f64 * (1.0 - 0.6 * heat) + target * 0.6 * heat).round() as u8
            };
            out.put_pixel(
                x,
                y,
                Rgb([blend(base[0], 255.0), blend(base[1], 40.0), blend(base[2], 40.0)]),
            );
        }
    }
    out
}
