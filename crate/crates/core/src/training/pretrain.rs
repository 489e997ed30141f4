use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::batch::{scalar, TrainBatch};
use super::config::{AdamConfig, TrainConfig};
use crate::data::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::losses::segmentation_ce;
use crate::nn::checkpoint::{fingerprint, Archive};
use crate::nn::UNet;

pub const SEGMENTER_CHECKPOINT: &str = "segmenter.ckpt";

/// Fingerprint of the segmenter architecture alone; weights are stored in f32 or f64
/// and converted on load.
pub fn segmenter_fingerprint(cfg: &TrainConfig) -> Result<String> {
    fingerprint(&cfg.segmenter)
}

/// Best weights from a pretraining checkpoint, checked against `cfg.segmenter`.
pub fn load_segmenter_weights(path: &Path, cfg: &TrainConfig) -> Result<BTreeMap<String, Tensor>> {
    let archive = Archive::load(path)?;
    archive.ensure_fingerprint(&segmenter_fingerprint(cfg)?)?;
    if !archive.has_group("segmenter") {
        return Err(Error::Checkpoint(format!("{} holds no segmenter weights", path.display())));
    }
    Ok(archive.group("segmenter"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub loss: f64,
    /// Pixel accuracy over the pretraining pairs after this epoch.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PretrainOptions {
    pub resume: Option<PathBuf>,
    /// Stop after this many epochs in total (for interrupted runs); the configured
    /// epoch budget still applies.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Weights with the best accuracy seen so far.
    pub weights: BTreeMap<String, Tensor>,
    pub best_accuracy: f64,
    pub reached_target: bool,
    pub history: Vec<PretrainEpoch>,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PretrainMeta {
    kind: String,
    epoch: usize,
    best_accuracy: f64,
    history: Vec<PretrainEpoch>,
    rng_word_pos: String,
    adam_steps: u64,
    samples: usize,
}

/// Pixel accuracy of `unet` over `ids`.
pub fn pixel_accuracy(unet: &UNet, manifest: &DatasetManifest, ids: &[usize], batch_size: usize) -> Result<f64> {
    let dtype = unet.params().dtype();
    let device = unet.params().device().clone();
    let (mut hits, mut total) = (0f64, 0f64);
    for chunk in ids.chunks(batch_size.max(1)) {
        let b = TrainBatch::load(manifest, Split::Train, chunk, dtype, &device)?;
        let pred = unet.predict(&b.c)?;
        let target = b.s.argmax(1)?;
        hits += scalar(&pred.eq(&target)?.to_dtype(DType::F64)?.sum_all()?)?;
        total += pred.elem_count() as f64;
    }
    Ok(hits / total)
}

/// Trains the segmenter on `(c, s)` training pairs until the pixel-accuracy target or
/// the epoch budget is reached, checkpointing every epoch. Missing the target is a
/// warning, not an error; the best weights are returned either way.
pub fn pretrain_segmenter(
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    out_dir: &Path,
    opts: &PretrainOptions,
) -> Result<PretrainOutcome> {
    cfg.segmenter.validate()?;
    let pc = &cfg.pretrain;
    if pc.batch_size == 0 || pc.epochs == 0 {
        return Err(Error::config("pretrain epochs and batch_size must be >= 1"));
    }
    if manifest.spec.num_classes != cfg.segmenter.out_channels {
        return Err(Error::config(format!(
            "dataset has {} classes, segmenter.out_channels is {}",
            manifest.spec.num_classes, cfg.segmenter.out_channels
        )));
    }
    let n = pc.max_samples.unwrap_or(usize::MAX).min(manifest.len(Split::Train));
    if n == 0 {
        return Err(Error::config("no (c, s) pairs available for segmenter pretraining"));
    }
    let device = Device::Cpu;
    let dtype = cfg.precision.dtype();
    let unet = UNet::new(&cfg.segmenter, cfg.seed + 4, dtype, &device)?;
    let adam_cfg = AdamConfig {
        beta1: pc.beta1,
        ..cfg.adam
    };
    let mut adam = Adam::new(unet.params(), cfg.lr_segmenter_pretrain, adam_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5345_4750_5245);
    let mut history = Vec::new();
    let mut best_accuracy = f64::NEG_INFINITY;
    let mut best = unet.params().snapshot()?;
    let mut epoch = 0;

    if let Some(path) = &opts.resume {
        let archive = Archive::load(path)?;
        archive.ensure_fingerprint(&segmenter_fingerprint(cfg)?)?;
        let meta: PretrainMeta =
            serde_json::from_value(archive.meta.clone()).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if meta.kind != "segmenter" || meta.samples != n {
            return Err(Error::Checkpoint("checkpoint belongs to a different pretraining run".into()));
        }
        unet.params().load(&archive.group("current"))?;
        best = archive.group("segmenter");
        adam.load_state(meta.adam_steps, &archive.group("opt"))?;
        rng.set_word_pos(meta.rng_word_pos.parse().map_err(|_| Error::Checkpoint("bad rng_word_pos".into()))?);
        epoch = meta.epoch;
        best_accuracy = meta.best_accuracy;
        history = meta.history;
    }

    let ckpt = out_dir.join(SEGMENTER_CHECKPOINT);
    let mut ids: Vec<usize> = (0..n).collect();
    let stop = opts.stop_after.unwrap_or(usize::MAX).min(pc.epochs);
    while epoch < stop && best_accuracy < pc.target_accuracy {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in ids.chunks(pc.batch_size) {
            let b = TrainBatch::load(manifest, Split::Train, chunk, dtype, &device)?;
            let loss = segmentation_ce(&b.s, &unet.forward_tensor(&b.c)?)?;
            let value = scalar(&loss)?;
            if !value.is_finite() {
                return Err(Error::Training(format!("segmenter loss is {value} at epoch {epoch}, samples {chunk:?}")));
            }
            adam.step(unet.params(), &loss.backward()?)?;
            loss_sum += value;
            batches += 1;
        }
        epoch += 1;
        let accuracy = pixel_accuracy(&unet, manifest, &(0..n).collect::<Vec<_>>(), pc.batch_size)?;
        history.push(PretrainEpoch {
            epoch,
            loss: loss_sum / batches as f64,
            accuracy,
        });
        log::info!("segmenter epoch {epoch}: loss {:.4} accuracy {accuracy:.4}", loss_sum / batches as f64);
        if accuracy > best_accuracy {
            best_accuracy = accuracy;
            best = unet.params().snapshot()?;
        }
        let meta = PretrainMeta {
            kind: "segmenter".into(),
            epoch,
            best_accuracy,
            history: history.clone(),
            rng_word_pos: rng.get_word_pos().to_string(),
            adam_steps: adam.steps(),
            samples: n,
        };
        let meta = serde_json::to_value(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut archive = Archive::new(segmenter_fingerprint(cfg)?, meta);
        archive.insert_group("segmenter", &best);
        archive.insert_group("current", &unet.params().snapshot()?);
        archive.insert_group("opt", &adam.state_tensors());
        archive.save(&ckpt)?;
    }
    let reached_target = best_accuracy >= pc.target_accuracy;
    if !reached_target && (epoch >= pc.epochs) {
        log::warn!(
            "segmenter reached {best_accuracy:.3} pixel accuracy after {epoch} epochs, below the {:.3} target; \
             returning the best weights",
            pc.target_accuracy
        );
    }
    Ok(PretrainOutcome {
        weights: best,
        best_accuracy,
        reached_target,
        history,
        checkpoint: ckpt,
    })
}
