//! Scene synthesis: a jittered K x K grid of products on shelves, one
//! rendered head at the bottom border with a direction tick toward the gaze
//! point, and full box/gaze annotations.

use gop_core::records::ImageRecord;
use gop_core::BoundingBox;
use image::{imageops, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::raster;

/// Everything that determines a dataset. The same `(spec, index)` pair
/// always renders the same sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub image_size: u32,
    /// Products per side: a `grid x grid` shelf layout.
    pub grid: u32,
    pub categories: u32,
    /// Product center jitter as a fraction of the cell size.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            image_size: 224,
            grid: 8,
            categories: 24,
            jitter: 0.25,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), crate::DataError> {
        if self.image_size < 64 {
            return Err(crate::DataError::InvalidSpec(
                "image_size must be at least 64".into(),
            ));
        }
        if self.grid == 0 || self.categories == 0 {
            return Err(crate::DataError::InvalidSpec(
                "grid and categories must be positive".into(),
            ));
        }
        if !(0.0..=0.5).contains(&self.jitter) {
            return Err(crate::DataError::InvalidSpec(
                "jitter must lie in [0, 0.5]".into(),
            ));
        }
        Ok(())
    }
}

/// One generated scene with its rendered images and annotation record.
/// The head-location mask is implied by `record.head_box`.
#[derive(Debug, Clone)]
pub struct Sample {
    pub record: ImageRecord,
    pub scene: RgbImage,
    pub head: RgbImage,
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 over the combined words
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn category_color(category: u32, total: u32) -> Rgb<u8> {
    let hue = category as f64 * 360.0 / total as f64 + 13.0;
    raster::hsv_to_rgb(hue, 0.75, 0.85)
}

fn darker(c: Rgb<u8>, f: f64) -> Rgb<u8> {
    Rgb([
        (c.0[0] as f64 * f) as u8,
        (c.0[1] as f64 * f) as u8,
        (c.0[2] as f64 * f) as u8,
    ])
}

/// Renders sample `index` of the dataset described by `spec`.
pub fn generate_sample(spec: &SceneSpec, index: u64) -> Result<Sample, crate::DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, index));
    let img = spec.image_size as f64;
    let k = spec.grid;

    // layout bands
    let margin = (img * 0.03).max(2.0);
    let shelf_top = margin;
    let shelf_bottom = img * 0.74;
    let head_top = img * 0.80;
    let head_bottom = img * 0.97;

    let mut scene = RgbImage::from_pixel(
        spec.image_size,
        spec.image_size,
        Rgb([235, 232, 226]),
    );

    // shelf boards under each product row
    let cell_w = (img - 2.0 * margin) / k as f64;
    let cell_h = (shelf_bottom - shelf_top) / k as f64;
    for row in 0..k {
        let y = shelf_top + (row as f64 + 1.0) * cell_h;
        raster::fill_rect(
            &mut scene,
            margin as i32 - 2,
            y as i32 - 2,
            (img - margin) as i32 + 2,
            y as i32,
            Rgb([180, 170, 158]),
        );
    }

    // products on a jittered grid
    let mut boxes = Vec::with_capacity((k * k) as usize);
    for row in 0..k {
        for col in 0..k {
            let category = rng.random_range(0..spec.categories);
            let w = (cell_w * rng.random_range(0.38..0.62)).clamp(8.0, 80.0);
            let h = (cell_h * rng.random_range(0.50..0.80)).clamp(8.0, 80.0);
            let jx = rng.random_range(-1.0..1.0) * spec.jitter * (cell_w - w).max(0.0) / 2.0;
            let jy = rng.random_range(-1.0..1.0) * spec.jitter * (cell_h - h).max(0.0) / 2.0;
            let cx = margin + (col as f64 + 0.5) * cell_w + jx;
            // products stand on the shelf board
            let bottom = shelf_top + (row as f64 + 1.0) * cell_h - 2.0 + jy.min(0.0);
            let (x1, y1, x2, y2) = (cx - w / 2.0, bottom - h, cx + w / 2.0, bottom);

            let color = category_color(category, spec.categories);
            raster::fill_rect(&mut scene, x1 as i32, y1 as i32, x2 as i32, y2 as i32, color);
            match category % 3 {
                1 => {
                    // horizontal stripes
                    let dark = darker(color, 0.55);
                    let mut y = y1 as i32;
                    while y < y2 as i32 {
                        raster::fill_rect(&mut scene, x1 as i32, y, x2 as i32, y + 1, dark);
                        y += 4;
                    }
                }
                2 => {
                    // label band
                    let light = Rgb([245, 245, 240]);
                    let band_y = (y1 + (y2 - y1) * 0.35) as i32;
                    raster::fill_rect(
                        &mut scene,
                        x1 as i32 + 1,
                        band_y,
                        x2 as i32 - 1,
                        band_y + ((y2 - y1) * 0.25) as i32,
                        light,
                    );
                }
                _ => {}
            }

            boxes.push(BoundingBox::new(x1, y1, x2, y2, category).map_err(|e| {
                crate::DataError::InvalidSpec(format!("degenerate product box: {e}"))
            })?);
        }
    }

    // gaze target: a uniformly chosen product, gaze point at its center
    let gaze_box_index = rng.random_range(0..boxes.len());
    let (gx, gy) = boxes[gaze_box_index].center();
    let gaze_point = [gx / img, gy / img];

    // head: a filled disk in the bottom band with a tick toward the gaze
    let radius = img * rng.random_range(0.045..0.060);
    let head_cx = rng.random_range(0.15..0.85) * img;
    let head_cy = rng.random_range(
        (head_top + radius + 2.0)..(head_bottom - radius - 2.0),
    );
    let skin = Rgb([224, 186, 154]);
    raster::draw_disk(&mut scene, head_cx, head_cy, radius, skin);
    let dir = ((gx - head_cx), (gy - head_cy));
    let norm = (dir.0 * dir.0 + dir.1 * dir.1).sqrt().max(1e-6);
    let tick = (dir.0 / norm * radius * 1.5, dir.1 / norm * radius * 1.5);
    raster::draw_line(
        &mut scene,
        head_cx,
        head_cy,
        head_cx + tick.0,
        head_cy + tick.1,
        3.0,
        Rgb([40, 30, 60]),
    );
    // pupil marking the gaze side of the head
    raster::draw_disk(
        &mut scene,
        head_cx + dir.0 / norm * radius * 0.45,
        head_cy + dir.1 / norm * radius * 0.45,
        radius * 0.22,
        Rgb([30, 30, 30]),
    );

    let pad = radius + 4.0;
    let head_box = BoundingBox::new(
        (head_cx - pad).max(0.0),
        (head_cy - pad).max(0.0),
        (head_cx + pad).min(img),
        (head_cy + pad).min(img),
        0,
    )
    .expect("head box inside image");

    // head crop, resized back to the network input size
    let crop = imageops::crop_imm(
        &scene,
        head_box.x1 as u32,
        head_box.y1 as u32,
        (head_box.width() as u32).max(1),
        (head_box.height() as u32).max(1),
    )
    .to_image();
    let head = imageops::resize(
        &crop,
        spec.image_size,
        spec.image_size,
        imageops::FilterType::Triangle,
    );

    let record = ImageRecord {
        image_id: index,
        boxes,
        gaze_point,
        gaze_box_index,
        head_box: Some(head_box),
    };
    record
        .validate()
        .map_err(|e| crate::DataError::InvalidSpec(format!("bad record: {e}")))?;
    Ok(Sample {
        record,
        scene,
        head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SceneSpec::default();
        let a = generate_sample(&spec, 3).unwrap();
        let b = generate_sample(&spec, 3).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.scene.as_raw(), b.scene.as_raw());
        assert_eq!(a.head.as_raw(), b.head.as_raw());
        let c = generate_sample(&spec, 4).unwrap();
        assert_ne!(a.record, c.record);
    }

    #[test]
    fn boxes_stay_inside_image_and_anchor_range() {
        let spec = SceneSpec::default();
        for idx in 0..50 {
            let s = generate_sample(&spec, idx).unwrap();
            assert_eq!(s.record.boxes.len(), 64);
            for b in &s.record.boxes {
                assert!(b.x1 >= 0.0 && b.y1 >= 0.0 && b.x2 <= 224.0 && b.y2 <= 224.0);
                assert!((8.0..=80.0).contains(&b.width()), "width {}", b.width());
                assert!((8.0..=80.0).contains(&b.height()), "height {}", b.height());
            }
        }
    }

    #[test]
    fn gaze_point_lies_inside_the_gaze_box() {
        let spec = SceneSpec {
            seed: 7,
            ..SceneSpec::default()
        };
        for idx in 0..1000 {
            let s = generate_sample(&spec, idx).unwrap();
            let b = s.record.gaze_box();
            let (gx, gy) = (
                s.record.gaze_point[0] * 224.0,
                s.record.gaze_point[1] * 224.0,
            );
            assert!(gx > b.x1 && gx < b.x2 && gy > b.y1 && gy < b.y2);
        }
    }

    #[test]
    fn head_region_is_disjoint_from_the_shelf() {
        let spec = SceneSpec::default();
        for idx in 0..50 {
            let s = generate_sample(&spec, idx).unwrap();
            let head = s.record.head_box.unwrap();
            for b in &s.record.boxes {
                assert_eq!(head.intersection_area(b), 0.0);
            }
        }
    }
}
