//! Joint training loop: detection + gaze MSE + energy aggregation, Adam,
//! JSON-lines loss logging, periodic checkpoints, deterministic resume.
//!
//! All per-step randomness (batch sampling, augmentation) is derived
//! statelessly from `(seed, step)`, so resuming from a checkpoint replays
//! the exact uninterrupted trajectory.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use gop_core::losses::{
    energy_aggregation_loss_grad, gaze_mse_loss_grad, total_loss,
};
use gop_core::heatmap::gaussian_gt_heatmap;
use gop_data::dataset::LoadedSample;
use gop_data::read_dataset;
use gop_model::detect::grid::{assign_targets, detection_loss, Targets};
use gop_model::GopModel;
use gop_nn::Adam;
use ndarray::{Array2, Array4, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::batch::{assemble, augment_sample, Batch};
use crate::checkpoint::{Checkpoint, LossRecord};
use crate::config::RunConfig;
use crate::CliError;

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub checkpoint_path: PathBuf,
    pub losses: Vec<LossRecord>,
}

fn step_rng(seed: u64, step: usize, stream: u64) -> ChaCha8Rng {
    let mut z = seed
        ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn batch_indices(n: usize, batch: usize, seed: u64, step: usize) -> Vec<usize> {
    let mut rng = step_rng(seed, step, 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order.truncate(batch.min(n));
    order
}

/// Gaussian target heatmap as an f32 grid.
fn target_heatmap(q: [f64; 2], cfg: &RunConfig) -> Array2<f32> {
    let t = gaussian_gt_heatmap((q[0], q[1]), &cfg.loss.gaussian_spec());
    t.as_array().mapv(|v| v as f32)
}

pub fn train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    let dataset = read_dataset(&cfg.dataset_dir)?;
    if dataset.samples.is_empty() {
        return Err(CliError::Data(gop_data::DataError::InvalidSpec(format!(
            "no samples under {}",
            cfg.dataset_dir.display()
        ))));
    }

    let out_dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&out_dir).map_err(CliError::io(&out_dir))?;

    let (mut model, mut adam, start_step, mut history) = match resume {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let (model, adam) = ckpt.restore()?;
            (model, adam, ckpt.step, ckpt.metric_history)
        }
        None => (
            GopModel::<f32>::new(&cfg.model, cfg.train.seed)?,
            Adam::new(cfg.train.lr),
            0,
            Vec::new(),
        ),
    };

    let n = dataset.samples.len();
    let steps_per_epoch = n.div_ceil(cfg.train.batch_size).max(1);
    let total_steps = cfg
        .train
        .max_steps
        .unwrap_or(cfg.train.epochs * steps_per_epoch);

    let losses_path = out_dir.join("losses.jsonl");
    let mut loss_log = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&losses_path)
        .map_err(CliError::io(&losses_path))?;

    let meta = model.grid_meta();
    let image_size = (cfg.model.image_size as u32, cfg.model.image_size as u32);
    let mut losses = Vec::new();

    for step in start_step..total_steps {
        let indices = batch_indices(n, cfg.train.batch_size, cfg.train.seed, step);
        let batch: Batch = if cfg.train.augment {
            let mut rng = step_rng(cfg.train.seed, step, 2);
            let augmented: Vec<LoadedSample> = indices
                .iter()
                .map(|&i| augment_sample(&dataset.samples[i], &mut rng))
                .collect();
            let refs: Vec<&LoadedSample> = augmented.iter().collect();
            assemble(&refs, cfg.scene.image_size)
        } else {
            let refs: Vec<&LoadedSample> = indices.iter().map(|&i| &dataset.samples[i]).collect();
            assemble(&refs, cfg.scene.image_size)
        };

        gop_nn::zero_grad(&mut model);
        let out = model.forward(&batch.scene, &batch.head, &batch.mask, true);

        // detection loss over the batch
        let targets: Vec<Targets> = batch
            .records
            .iter()
            .map(|r| assign_targets(&r.boxes, &meta))
            .collect();
        let (det, mut g_grid) = detection_loss(&out.grid, &targets, &meta);

        // per-sample gaze losses on the heatmap
        let b = batch.records.len();
        let mut g_heat = Array4::<f32>::zeros(out.heatmap.raw_dim());
        let (mut l_gaze, mut l_eng) = (0.0f64, 0.0f64);
        for (i, record) in batch.records.iter().enumerate() {
            let hm = out.heatmap.index_axis(Axis(0), i);
            let hm = hm.index_axis(Axis(0), 0);
            let target = target_heatmap(record.gaze_point, cfg);
            let (mse, mse_grad) = gaze_mse_loss_grad(&hm, &target.view())?;
            let (eng, eng_grad) = energy_aggregation_loss_grad(&hm, record.gaze_box(), image_size)
                .map_err(|e| CliError::Train(format!("step {step}: l_eng: {e}")))?;
            l_gaze += f64::from(mse) / b as f64;
            l_eng += f64::from(eng) / b as f64;
            let lambda_g = cfg.loss.lambda_gaze as f32;
            let lambda_e = cfg.loss.lambda_eng as f32;
            let scale = 1.0 / b as f32;
            let mut slot = g_heat.index_axis_mut(Axis(0), i);
            let mut slot = slot.index_axis_mut(Axis(0), 0);
            ndarray::Zip::from(&mut slot)
                .and(&mse_grad)
                .and(&eng_grad)
                .for_each(|g, &mg, &eg| {
                    *g = scale * (lambda_g * mg + lambda_e * eg);
                });
        }

        let total = total_loss(det.total, l_gaze, l_eng, &cfg.loss)
            .map_err(|e| CliError::Train(format!("step {step}: {e}")))?;
        if !total.is_finite() {
            return Err(CliError::Train(format!("step {step}: non-finite loss")));
        }

        if cfg.loss.lambda_det != 1.0 {
            g_grid.mapv_inplace(|v| v * cfg.loss.lambda_det as f32);
        }
        model.backward(&g_grid, &g_heat);
        adam.step(&mut model);

        let record = LossRecord {
            step: step + 1,
            l_det: det.total,
            l_gaze,
            l_eng,
            total,
        };
        losses.push(record);
        if (step + 1) % cfg.train.log_every == 0 || step + 1 == total_steps || step == 0 {
            let line = serde_json::to_string(&record).expect("loss record");
            writeln!(loss_log, "{line}").map_err(CliError::io(&losses_path))?;
            history.push(record);
        }

        if cfg.train.checkpoint_every > 0
            && (step + 1) % cfg.train.checkpoint_every == 0
            && step + 1 != total_steps
        {
            let ckpt = Checkpoint::capture(
                cfg,
                &mut model,
                &adam,
                step + 1,
                (step + 1) / steps_per_epoch,
                history.clone(),
            );
            ckpt.save(&out_dir.join(format!("checkpoint_step{:06}.json", step + 1)))?;
        }
    }

    let checkpoint = Checkpoint::capture(
        cfg,
        &mut model,
        &adam,
        total_steps,
        cfg.train.epochs,
        history,
    );
    let checkpoint_path = out_dir.join("checkpoint.json");
    checkpoint.save(&checkpoint_path)?;
    Ok(TrainOutcome {
        checkpoint,
        checkpoint_path,
        losses,
    })
}
