use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::batch::{scalar, TrainBatch};
use super::config::{AdamConfig, TrainConfig};
use super::pretrain::load_segmenter_weights;
use crate::data::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::losses::{
    discriminator_term, generator_term, reconstruction_loss, segmentation_loss, total_objective, total_ssim_loss,
    LossBundle, LossTerms,
};
use crate::nn::checkpoint::Archive;
use crate::nn::{ColorizationGenerator, Discriminator, ParamStore, ReverseGenerator, UNet};

pub const LOG_FILE: &str = "losses.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// The four trained networks plus the (normally frozen) segmenter.
#[derive(Debug, Clone)]
pub struct CycleModels {
    pub g_mc: ColorizationGenerator,
    pub g_cm: ReverseGenerator,
    pub d_c: Discriminator,
    pub d_m: Discriminator,
    pub segmenter: Option<UNet>,
}

impl CycleModels {
    pub fn new(cfg: &TrainConfig, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let dtype = cfg.precision.dtype();
        let g = cfg.effective_generator();
        let segmenter = if !cfg.ablation.uses_segmenter() {
            None
        } else if cfg.unfreeze_segmenter {
            Some(UNet::new(&cfg.segmenter, cfg.seed + 4, dtype, device)?)
        } else {
            Some(UNet::new_frozen(&cfg.segmenter, cfg.seed + 4, dtype, device)?)
        };
        Ok(Self {
            g_mc: ColorizationGenerator::new(&g, cfg.seed, dtype, device)?,
            g_cm: ReverseGenerator::new(&g, cfg.seed + 1, dtype, device)?,
            d_c: Discriminator::new(&cfg.discriminator, 3, cfg.image_size, cfg.seed + 2, dtype, device)?,
            d_m: Discriminator::new(&cfg.discriminator, 1, cfg.image_size, cfg.seed + 3, dtype, device)?,
            segmenter,
        })
    }

    /// Parameter stores in checkpoint order, named by group.
    pub fn stores(&self) -> Vec<(&'static str, &ParamStore)> {
        let mut out = vec![
            ("g_mc", self.g_mc.params()),
            ("g_cm", self.g_cm.params()),
            ("d_c", self.d_c.params()),
            ("d_m", self.d_m.params()),
        ];
        if let Some(s) = &self.segmenter {
            out.push(("segmenter", s.params()));
        }
        out
    }
}

/// Position in the seeded sample order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub step: u64,
    pub epoch: usize,
    pub cursor: usize,
    pub order: Vec<usize>,
}

/// One line of the loss log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub epoch: usize,
    #[serde(flatten)]
    pub losses: LossBundle,
}

struct Optimizers {
    nets: BTreeMap<&'static str, Adam>,
    segmenter: Option<Adam>,
}

/// Complete training state: networks, optimizer moments, sample order and RNG.
pub struct Trainer {
    cfg: TrainConfig,
    models: CycleModels,
    opt: Optimizers,
    progress: Progress,
    rng: ChaCha8Rng,
    n_train: usize,
}

fn rng_seed(cfg: &TrainConfig) -> u64 {
    cfg.seed ^ 0x5348_5546_464c_4531
}

impl Trainer {
    /// Fresh state. `segmenter` holds pretrained weights and is required whenever the
    /// configuration uses the segmentation loss.
    pub fn new(
        cfg: &TrainConfig,
        n_train: usize,
        segmenter: Option<&BTreeMap<String, Tensor>>,
        device: &Device,
    ) -> Result<Self> {
        if n_train == 0 {
            return Err(Error::config("training split is empty"));
        }
        let models = CycleModels::new(cfg, device)?;
        match (&models.segmenter, segmenter) {
            (Some(s), Some(w)) => s.params().load(w)?,
            (Some(_), None) => {
                return Err(Error::config(
                    "this configuration uses the segmentation loss; pretrained segmenter weights are required",
                ))
            }
            (None, _) => {}
        }
        let mut nets = BTreeMap::new();
        for (name, store) in models.stores() {
            let lr = if name.starts_with('d') {
                cfg.lr_discriminators
            } else {
                cfg.lr_generators
            };
            if name != "segmenter" {
                nets.insert(name, Adam::new(store, lr, cfg.adam)?);
            }
        }
        let segmenter = match &models.segmenter {
            Some(s) if cfg.unfreeze_segmenter => Some(Adam::new(
                s.params(),
                cfg.lr_segmenter_pretrain,
                AdamConfig {
                    beta1: cfg.pretrain.beta1,
                    ..cfg.adam
                },
            )?),
            _ => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            models,
            opt: Optimizers { nets, segmenter },
            progress: Progress {
                step: 0,
                epoch: 0,
                cursor: 0,
                order: Vec::new(),
            },
            rng: ChaCha8Rng::seed_from_u64(rng_seed(cfg)),
            n_train,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn models(&self) -> &CycleModels {
        &self.models
    }

    pub fn progress(&self) -> &Progress {
        &self.progress
    }

    pub fn step(&self) -> u64 {
        self.progress.step
    }

    /// Optimizer step counts per network.
    pub fn optimizer_steps(&self) -> BTreeMap<String, u64> {
        let mut out: BTreeMap<String, u64> = self.opt.nets.iter().map(|(k, a)| (k.to_string(), a.steps())).collect();
        if let Some(a) = &self.opt.segmenter {
            out.insert("segmenter".into(), a.steps());
        }
        out
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.n_train.div_ceil(self.cfg.batch_size)
    }

    /// Indices of the next batch, reshuffling at epoch boundaries; `None` once all
    /// configured epochs are consumed.
    pub fn next_batch_ids(&mut self) -> Option<Vec<usize>> {
        let p = &mut self.progress;
        if p.cursor >= p.order.len() {
            if !p.order.is_empty() {
                p.epoch += 1;
            }
            if p.epoch >= self.cfg.epochs {
                p.order.clear();
                p.cursor = 0;
                return None;
            }
            p.order = (0..self.n_train).collect();
            p.order.shuffle(&mut self.rng);
            p.cursor = 0;
        }
        let end = (p.cursor + self.cfg.batch_size).min(p.order.len());
        let ids = p.order[p.cursor..end].to_vec();
        p.cursor = end;
        Some(ids)
    }

    /// One alternating update: discriminators first, then both generators.
    pub fn train_step(&mut self, batch: &TrainBatch) -> Result<LossBundle> {
        let with_ids = |e: Error| match e {
            Error::Training(msg) => Error::Training(format!("{msg} (batch sample ids {:?})", batch.ids)),
            other => other,
        };
        self.step_inner(batch).map_err(with_ids)
    }

    fn step_inner(&mut self, batch: &TrainBatch) -> Result<LossBundle> {
        let cfg = &self.cfg;
        let m = &self.models;
        let (c_hat, c_prime) = m.g_mc.forward_tensors(&batch.m)?;
        let m_hat = m.g_cm.forward_tensor(&batch.c)?;

        // discriminator sub-step
        let mut fakes_c = vec![c_hat.detach()];
        if cfg.d_sees_pseudo {
            if let Some(cp) = &c_prime {
                fakes_c.push(cp.detach());
            }
        }
        let fake_c = Tensor::cat(&fakes_c, 0)?;
        let d_loss = (discriminator_term(&m.d_c.forward_tensor(&batch.c)?, &m.d_c.forward_tensor(&fake_c)?)?
            + discriminator_term(&m.d_m.forward_tensor(&batch.m)?, &m.d_m.forward_tensor(&m_hat.detach())?)?)?;
        let adv_d = scalar(&d_loss)?;
        if !adv_d.is_finite() {
            return Err(Error::Training(format!("discriminator loss is {adv_d}")));
        }
        let grads = d_loss.backward()?;
        for (name, store) in [("d_c", m.d_c.params()), ("d_m", m.d_m.params())] {
            self.opt.nets.get_mut(name).expect("optimizer").step(store, &grads)?;
        }

        // generator sub-step against the updated discriminators
        let adv_g = (generator_term(&m.d_c.forward_tensor(&c_hat)?)? + generator_term(&m.d_m.forward_tensor(&m_hat)?)?)?;
        let needs_c_rec = !cfg.ablation.disable_cycle_rec || cfg.ablation.seg_on_reconstructed_cryo;
        let c_rec = if needs_c_rec {
            Some(m.g_mc.forward_tensors(&m_hat)?.0)
        } else {
            None
        };
        let rec = if cfg.ablation.disable_cycle_rec {
            None
        } else {
            let m_rec = m.g_cm.forward_tensor(&c_hat)?;
            Some(reconstruction_loss(&batch.m, &m_rec, &batch.c, c_rec.as_ref().expect("computed"))?)
        };
        let ssim = total_ssim_loss(&batch.m, &batch.c, &c_hat, &m_hat, c_prime.as_ref(), &cfg.ssim)?;
        let seg = match &m.segmenter {
            None => None,
            Some(segmenter) => {
                let cryo = if cfg.seg_on_literal_c {
                    &batch.c
                } else if cfg.ablation.seg_on_reconstructed_cryo {
                    c_rec.as_ref().expect("computed")
                } else {
                    c_prime
                        .as_ref()
                        .ok_or_else(|| Error::config("segmentation on c' needs the pseudo decoder"))?
                };
                Some(segmentation_loss(&batch.s, cryo, segmenter)?)
            }
        };
        let terms = LossTerms { adv_g, rec, ssim, seg };
        let (total, bundle) = total_objective(&terms, adv_d, &cfg.weights)?;
        let grads = total.backward()?;
        for (name, store) in [("g_mc", m.g_mc.params()), ("g_cm", m.g_cm.params())] {
            self.opt.nets.get_mut(name).expect("optimizer").step(store, &grads)?;
        }
        if let (Some(opt), Some(s)) = (&mut self.opt.segmenter, &m.segmenter) {
            opt.step(s.params(), &grads)?;
        }
        self.progress.step += 1;
        Ok(bundle)
    }

    /// Serializes everything needed to continue bit-exactly.
    pub fn to_archive(&self, tag: &str, dataset_checksum: &str) -> Result<Archive> {
        let meta = serde_json::json!({
            "kind": "cycle",
            "tag": tag,
            "progress": self.progress,
            "n_train": self.n_train,
            "rng_word_pos": self.rng.get_word_pos().to_string(),
            "optimizer_steps": self.optimizer_steps(),
            "dataset_checksum": dataset_checksum,
            "config": self.cfg,
        });
        let mut archive = Archive::new(self.cfg.architecture_fingerprint()?, meta);
        for (name, store) in self.models.stores() {
            archive.insert_group(name, &store.snapshot()?);
        }
        for (name, opt) in &self.opt.nets {
            archive.insert_group(&format!("opt_{name}"), &opt.state_tensors());
        }
        if let Some(opt) = &self.opt.segmenter {
            archive.insert_group("opt_segmenter", &opt.state_tensors());
        }
        Ok(archive)
    }

    /// Rebuilds a trainer from an archive written by [`Trainer::to_archive`]; `cfg` must
    /// describe the same architecture.
    pub fn from_archive(archive: &Archive, cfg: &TrainConfig, device: &Device) -> Result<Self> {
        archive.ensure_fingerprint(&cfg.architecture_fingerprint()?)?;
        let meta = &archive.meta;
        if meta["kind"] != "cycle" {
            return Err(Error::Checkpoint("not a cyclic-training checkpoint".into()));
        }
        let field = |k: &str| meta.get(k).cloned().ok_or_else(|| Error::Checkpoint(format!("checkpoint meta lacks {k}")));
        let from_json = |k: &str| -> Result<serde_json::Value> { field(k) };
        let progress: Progress =
            serde_json::from_value(from_json("progress")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let n_train: usize =
            serde_json::from_value(from_json("n_train")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let steps: BTreeMap<String, u64> =
            serde_json::from_value(from_json("optimizer_steps")?).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let word_pos: u128 = field("rng_word_pos")?
            .as_str()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Checkpoint("bad rng_word_pos".into()))?;

        let segmenter = archive.has_group("segmenter").then(|| archive.group("segmenter"));
        let mut trainer = Self::new(cfg, n_train, segmenter.as_ref(), device)?;
        for (name, store) in trainer.models.stores() {
            store.load(&archive.group(name))?;
        }
        for (name, opt) in trainer.opt.nets.iter_mut() {
            let n = *steps.get(*name).ok_or_else(|| Error::Checkpoint(format!("no step count for {name}")))?;
            opt.load_state(n, &archive.group(&format!("opt_{name}")))?;
        }
        if let Some(opt) = &mut trainer.opt.segmenter {
            let n = *steps.get("segmenter").unwrap_or(&0);
            opt.load_state(n, &archive.group("opt_segmenter"))?;
        }
        trainer.progress = progress;
        trainer.rng.set_word_pos(word_pos);
        Ok(trainer)
    }
}

/// Options for [`train`].
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Stop after this many global steps (the run can be resumed later).
    pub max_steps: Option<u64>,
    /// Continue from this checkpoint instead of starting fresh.
    pub resume: Option<PathBuf>,
    /// Pretrained segmenter checkpoint (ignored when resuming).
    pub segmenter: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub steps: u64,
    /// All configured epochs finished.
    pub completed: bool,
    pub last_checkpoint: PathBuf,
    pub final_checkpoint: Option<PathBuf>,
    pub log_path: PathBuf,
    /// Records produced by this invocation.
    pub records: Vec<LogRecord>,
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|line| {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::Training(format!("bad loss log line: {e}")))
        })
        .collect()
}

fn save_checkpoint(trainer: &Trainer, path: &Path, tag: &str, checksum: &str, last_good: &Option<PathBuf>) -> Result<()> {
    trainer.to_archive(tag, checksum)?.save(path).map_err(|e| {
        match last_good {
            Some(p) => log::error!("checkpoint write failed; last good checkpoint is {}", p.display()),
            None => log::error!("checkpoint write failed before any checkpoint was written"),
        }
        e
    })
}

/// Runs (or resumes) cyclic training, writing the loss log, checkpoints and the
/// resolved configuration under `out_dir`.
pub fn train(manifest: &DatasetManifest, cfg: &TrainConfig, out_dir: &Path, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    let device = Device::Cpu;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let size = manifest.spec.image_size;
    if size != cfg.image_size {
        return Err(Error::config(format!(
            "dataset images are {size}x{size} but image_size is {}",
            cfg.image_size
        )));
    }
    let n_train = manifest.len(Split::Train);
    let mut trainer = match &opts.resume {
        Some(path) => Trainer::from_archive(&Archive::load(path)?, cfg, &device)?,
        None => {
            let seg = if cfg.ablation.uses_segmenter() {
                let path = opts.segmenter.as_ref().ok_or_else(|| {
                    Error::config("a pretrained segmenter checkpoint is required (run train-seg first)")
                })?;
                Some(load_segmenter_weights(path, cfg)?)
            } else {
                None
            };
            Trainer::new(cfg, n_train, seg.as_ref(), &device)?
        }
    };
    if trainer.n_train != n_train {
        return Err(Error::config(format!(
            "checkpoint was trained on {} samples, dataset has {n_train}",
            trainer.n_train
        )));
    }
    let resolved = cfg.to_toml_string()?;
    crate::nn::checkpoint::write_atomic(&out_dir.join(CONFIG_FILE), resolved.as_bytes())?;

    let log_path = out_dir.join(LOG_FILE);
    let start_step = trainer.step();
    // earlier lines are kept verbatim so a resumed log matches an uninterrupted one byte for byte
    let mut text = String::new();
    if opts.resume.is_some() && log_path.exists() {
        let old = std::fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;
        for line in old.lines().filter(|l| !l.trim().is_empty()) {
            let r: LogRecord =
                serde_json::from_str(line).map_err(|e| Error::Training(format!("bad loss log line: {e}")))?;
            if r.step <= start_step {
                text.push_str(line);
                text.push('\n');
            }
        }
    }
    crate::nn::checkpoint::write_atomic(&log_path, text.as_bytes())?;
    let mut log_file = OpenOptions::new().append(true).open(&log_path).map_err(|e| Error::io(&log_path, e))?;

    let dtype = cfg.precision.dtype();
    let mut records = Vec::new();
    let mut last_good: Option<PathBuf> = opts.resume.clone();
    let last_path = out_dir.join(LAST_CHECKPOINT);
    let mut completed = false;
    loop {
        if opts.max_steps.is_some_and(|m| trainer.step() >= m) {
            break;
        }
        let Some(ids) = trainer.next_batch_ids() else {
            completed = true;
            break;
        };
        let batch = TrainBatch::load(manifest, Split::Train, &ids, dtype, &device)?;
        let losses = trainer.train_step(&batch)?;
        let record = LogRecord {
            step: trainer.step(),
            epoch: trainer.progress.epoch,
            losses,
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::Training(e.to_string()))?;
        writeln!(log_file, "{line}").map_err(|e| Error::io(&log_path, e))?;
        if record.step % 10 == 0 {
            log::info!(
                "step {} epoch {}: total {:.4} adv_d {:.4}",
                record.step,
                record.epoch,
                record.losses.total,
                record.losses.adv_d
            );
        }
        records.push(record);
        if cfg.checkpoint_every > 0 && trainer.step() % cfg.checkpoint_every == 0 {
            let path = out_dir.join(format!("step_{:08}.ckpt", trainer.step()));
            save_checkpoint(&trainer, &path, "periodic", &manifest.checksum, &last_good)?;
            last_good = Some(path);
        }
    }
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;
    // peek past the last batch so a completed run resumes as completed
    let p = &trainer.progress;
    if !completed && !p.order.is_empty() && p.cursor >= p.order.len() && p.epoch + 1 >= cfg.epochs {
        completed = trainer.next_batch_ids().is_none();
    }
    save_checkpoint(&trainer, &last_path, "last", &manifest.checksum, &last_good)?;
    let final_checkpoint = if completed {
        let path = out_dir.join(FINAL_CHECKPOINT);
        save_checkpoint(&trainer, &path, "final", &manifest.checksum, &Some(last_path.clone()))?;
        Some(path)
    } else {
        None
    };
    Ok(TrainOutcome {
        steps: trainer.step(),
        completed,
        last_checkpoint: last_path,
        final_checkpoint,
        log_path,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_phantom, PhantomSpec};
    use crate::nn::GeneratorConfig;
    use crate::training::config::AblationFlags;
    use crate::training::Variant;

    fn tiny_cfg(ablation: AblationFlags) -> TrainConfig {
        let mut cfg = TrainConfig::desk(3);
        cfg.image_size = 32;
        cfg.batch_size = 2;
        cfg.epochs = 1;
        cfg.generator = GeneratorConfig {
            base_channels: 8,
            depth: 2,
            num_residual_blocks: 1,
            ..cfg.generator
        };
        cfg.discriminator.base_channels = 4;
        cfg.segmenter.depth = 2;
        cfg.segmenter.base_channels = 4;
        cfg.ablation = ablation;
        cfg
    }

    fn batch(n: usize) -> TrainBatch {
        let spec = PhantomSpec::new(32, 3, 1);
        let samples: Vec<_> = (0..n as u64).map(|i| generate_phantom(&spec, i).unwrap()).collect();
        TrainBatch::from_samples((0..n).collect(), &samples, candle_core::DType::F32, &Device::Cpu).unwrap()
    }

    fn seg_weights(cfg: &TrainConfig) -> BTreeMap<String, Tensor> {
        UNet::new(&cfg.segmenter, 99, cfg.precision.dtype(), &Device::Cpu).unwrap().params().snapshot().unwrap()
    }

    fn trainer(cfg: &TrainConfig) -> Trainer {
        let seg = cfg.ablation.uses_segmenter().then(|| seg_weights(cfg));
        Trainer::new(cfg, 4, seg.as_ref(), &Device::Cpu).unwrap()
    }

    #[test]
    fn alternation_touches_only_the_scheduled_networks() {
        let cfg = tiny_cfg(AblationFlags::default());
        let mut t = trainer(&cfg);
        let before: Vec<_> = t.models.stores().iter().map(|(n, s)| (*n, s.snapshot().unwrap())).collect();
        t.train_step(&batch(2)).unwrap();
        for (name, snap) in before {
            let store = t.models.stores().into_iter().find(|(n, _)| *n == name).unwrap().1;
            let unchanged = store.bit_equal(&snap).unwrap();
            assert_eq!(unchanged, name == "segmenter", "{name}");
        }
        assert!(t.optimizer_steps().values().all(|&s| s == 1));
    }

    #[test]
    fn ablation_bundles() {
        let mut a1 = trainer(&tiny_cfg(Variant::A1.flags()));
        let b = a1.train_step(&batch(2)).unwrap();
        assert!(b.rec.is_none() && b.seg.is_some());
        let mut a3 = trainer(&tiny_cfg(Variant::A3.flags()));
        let b = a3.train_step(&batch(2)).unwrap();
        assert!(b.seg.is_none() && b.ssim_c_cprime.is_none() && b.rec.is_some());
        let mut a4 = trainer(&tiny_cfg(Variant::A4.flags()));
        let b = a4.train_step(&batch(2)).unwrap();
        assert!(b.seg.is_some() && b.ssim_c_cprime.is_none());
    }

    #[test]
    fn missing_segmenter_is_rejected() {
        let cfg = tiny_cfg(AblationFlags::default());
        assert!(matches!(Trainer::new(&cfg, 4, None, &Device::Cpu), Err(Error::Config(_))));
        let a2 = tiny_cfg(Variant::A2.flags());
        assert!(Trainer::new(&a2, 4, None, &Device::Cpu).is_ok());
    }

    #[test]
    fn epochs_cover_every_sample_once() {
        let mut cfg = tiny_cfg(Variant::A2.flags());
        cfg.batch_size = 3;
        cfg.epochs = 2;
        let mut t = Trainer::new(&cfg, 7, None, &Device::Cpu).unwrap();
        let mut seen = vec![0; 7];
        let mut batches = 0;
        while let Some(ids) = t.next_batch_ids() {
            ids.iter().for_each(|&i| seen[i] += 1);
            batches += 1;
        }
        assert_eq!(batches, 2 * 3);
        assert!(seen.iter().all(|&c| c == 2));
    }

    #[test]
    fn archive_restores_identical_state() {
        let cfg = tiny_cfg(AblationFlags::default());
        let mut t = trainer(&cfg);
        t.next_batch_ids();
        t.train_step(&batch(2)).unwrap();
        let a = t.to_archive("last", "x").unwrap();
        let mut r = Trainer::from_archive(&a, &cfg, &Device::Cpu).unwrap();
        assert_eq!(a.encode().unwrap(), r.to_archive("last", "x").unwrap().encode().unwrap());
        assert_eq!(t.next_batch_ids(), r.next_batch_ids());
        let b = batch(2);
        assert_eq!(t.train_step(&b).unwrap(), r.train_step(&b).unwrap());
    }
}
