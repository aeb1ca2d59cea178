//! Batch assembly: images and masks to tensors, with the two training-time
//! transformations kept for joint gaze/detection training — random crop and
//! color jitter.

use gop_core::records::ImageRecord;
use gop_core::BoundingBox;
use gop_data::dataset::LoadedSample;
use gop_data::tensor::{head_mask, image_to_array};
use image::imageops;
use image::RgbImage;
use ndarray::{Array4, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct Batch {
    pub scene: Array4<f32>,
    pub head: Array4<f32>,
    pub mask: Array4<f32>,
    pub records: Vec<ImageRecord>,
}

pub fn assemble(samples: &[&LoadedSample], image_size: u32) -> Batch {
    let n = samples.len();
    let s = image_size as usize;
    let mut scene = Array4::zeros((n, 3, s, s));
    let mut head = Array4::zeros((n, 3, s, s));
    let mut mask = Array4::zeros((n, 1, s, s));
    let mut records = Vec::with_capacity(n);
    for (i, sample) in samples.iter().enumerate() {
        scene
            .index_axis_mut(Axis(0), i)
            .assign(&image_to_array(&sample.scene));
        head.index_axis_mut(Axis(0), i)
            .assign(&image_to_array(&sample.head));
        let hb = sample.record.head_box.expect("dataset records carry head boxes");
        mask.index_axis_mut(Axis(0), i)
            .index_axis_mut(Axis(0), 0)
            .assign(&head_mask(&hb, image_size));
        records.push(sample.record.clone());
    }
    Batch {
        scene,
        head,
        mask,
        records,
    }
}

/// Random crop (scale in `[0.9, 1]`) and per-channel color jitter, applied
/// coherently to the scene, the head crop, and every annotation. Falls back
/// to the untransformed sample when the crop would cut the gaze box.
pub fn augment_sample(sample: &LoadedSample, rng: &mut ChaCha8Rng) -> LoadedSample {
    let img = sample.scene.width() as f64;
    let scale = rng.random_range(0.9..1.0);
    let crop_size = (img * scale).round();
    let max_off = img - crop_size;
    let ox = rng.random_range(0.0..=max_off);
    let oy = rng.random_range(0.0..=max_off);
    let gains: [f64; 3] = [
        rng.random_range(0.9..1.1),
        rng.random_range(0.9..1.1),
        rng.random_range(0.9..1.1),
    ];

    let remap_box = |b: &BoundingBox| -> Option<BoundingBox> {
        let t = BoundingBox {
            x1: (b.x1 - ox) / scale,
            y1: (b.y1 - oy) / scale,
            x2: (b.x2 - ox) / scale,
            y2: (b.y2 - oy) / scale,
            ..*b
        };
        let clipped = t.clip((img as u32, img as u32))?;
        // drop boxes that mostly left the frame
        (clipped.area() >= 0.4 * t.area()).then_some(clipped)
    };

    let gaze_box = sample.record.gaze_box();
    let Some(new_gaze_box) = remap_box(gaze_box) else {
        return clone_sample(sample);
    };
    let Some(head_box) = sample.record.head_box.as_ref().and_then(remap_box) else {
        return clone_sample(sample);
    };

    let mut boxes = Vec::with_capacity(sample.record.boxes.len());
    let mut gaze_box_index = None;
    for (i, b) in sample.record.boxes.iter().enumerate() {
        if i == sample.record.gaze_box_index {
            gaze_box_index = Some(boxes.len());
            boxes.push(new_gaze_box);
        } else if let Some(t) = remap_box(b) {
            boxes.push(t);
        }
    }

    let size = sample.scene.width();
    let cropped = imageops::crop_imm(
        &sample.scene,
        ox as u32,
        oy as u32,
        crop_size as u32,
        crop_size as u32,
    )
    .to_image();
    let mut scene = imageops::resize(&cropped, size, size, imageops::FilterType::Triangle);
    jitter_colors(&mut scene, gains);

    // re-crop the head from the transformed scene
    let head_crop = imageops::crop_imm(
        &scene,
        head_box.x1 as u32,
        head_box.y1 as u32,
        (head_box.width() as u32).max(1),
        (head_box.height() as u32).max(1),
    )
    .to_image();
    let head = imageops::resize(&head_crop, size, size, imageops::FilterType::Triangle);

    let gaze_point = [
        ((sample.record.gaze_point[0] * img - ox) / scale / img).clamp(0.0, 1.0),
        ((sample.record.gaze_point[1] * img - oy) / scale / img).clamp(0.0, 1.0),
    ];

    LoadedSample {
        record: ImageRecord {
            image_id: sample.record.image_id,
            boxes,
            gaze_point,
            gaze_box_index: gaze_box_index.expect("gaze box retained"),
            head_box: Some(head_box),
        },
        scene,
        head,
    }
}

fn clone_sample(s: &LoadedSample) -> LoadedSample {
    LoadedSample {
        record: s.record.clone(),
        scene: s.scene.clone(),
        head: s.head.clone(),
    }
}

fn jitter_colors(img: &mut RgbImage, gains: [f64; 3]) {
    for px in img.pixels_mut() {
        for c in 0..3 {
            px.0[c] = (px.0[c] as f64 * gains[c]).round().clamp(0.0, 255.0) as u8;
        }
    }
}
