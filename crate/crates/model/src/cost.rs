//! MAC-count stage descriptors for the cost-direction comparisons:
//! rearrangement vs interpolation upsampling, and the single detection
//! head vs a three-head variant.

use gop_core::flops::Stage;

use crate::ModelConfig;

fn conv(name: &str, cin: usize, cout: usize, k: usize, oh: usize, ow: usize) -> Stage {
    Stage::Convolution {
        name: Some(name.to_string()),
        in_channels: cin as u64,
        out_channels: cout as u64,
        kernel: k as u64,
        out_h: oh as u64,
        out_w: ow as u64,
    }
}

/// Upsampling one `(channels, h, w)` level by `r` via pure rearrangement.
pub fn defocus_upsample_stages(channels: usize, h: usize, w: usize, r: usize) -> Vec<Stage> {
    vec![Stage::Defocus {
        name: Some("rearrange".into()),
        channels: channels as u64,
        in_h: h as u64,
        in_w: w as u64,
        ratio: r as u64,
    }]
}

/// The interpolation alternative: compress channels by `r^2` with a 1x1
/// convolution, then bilinear-interpolate to the same output shape.
pub fn interpolation_upsample_stages(channels: usize, h: usize, w: usize, r: usize) -> Vec<Stage> {
    vec![
        conv("compress", channels, channels / (r * r), 1, h, w),
        Stage::Interpolation {
            name: Some("bilinear".into()),
            channels: (channels / (r * r)) as u64,
            out_h: (h * r) as u64,
            out_w: (w * r) as u64,
            kernel_support: 4,
        },
    ]
}

/// Neck + head stages of the single-scale detector.
pub fn single_head_stages(cfg: &ModelConfig) -> Vec<Stage> {
    let r2 = cfg.defocus_ratio * cfg.defocus_ratio;
    let [_, c3, c4, c5] = cfg.block_channels;
    let w = cfg.det_channels;
    let s4 = cfg.image_size / 16; // rearranged C5 level
    let s8 = cfg.image_size / 8;
    let s16 = cfg.image_size / 4;
    vec![
        conv("conv5", c5 / r2, w, 3, s4, s4),
        conv("conv4", c4 / r2 + w / r2, w, 3, s8, s8),
        conv("conv3", c3 / r2 + w / r2, w, 3, s16, s16),
        conv("mid", w, w, 3, s16, s16),
        conv("head_p3", w, cfg.grid_channels(), 1, s16, s16),
    ]
}

/// The same neck with detection heads kept at all three scales.
pub fn three_head_stages(cfg: &ModelConfig) -> Vec<Stage> {
    let w = cfg.det_channels;
    let s4 = cfg.image_size / 16;
    let s8 = cfg.image_size / 8;
    let mut stages = single_head_stages(cfg);
    stages.push(conv("mid_p4", w, w, 3, s8, s8));
    stages.push(conv("head_p4", w, cfg.grid_channels(), 1, s8, s8));
    stages.push(conv("mid_p5", w, w, 3, s4, s4));
    stages.push(conv("head_p5", w, cfg.grid_channels(), 1, s4, s4));
    stages
}
