use std::path::Path;

use candle_core::Device;
use ndarray::Array3;

use super::config::TrainConfig;
use super::trainer::Trainer;
use crate::error::{Error, Result};
use crate::image::{stack_arrays, tensor_item, ImageBatch};
use crate::metrics::ColorizationModel;
use crate::nn::checkpoint::Archive;
use crate::nn::ColorizationGenerator;

/// Inference-only view of a trained model: MRI in, colorized MRI out. The pseudo
/// Cryosection head is evaluated but discarded.
#[derive(Debug, Clone)]
pub struct Colorizer {
    generator: ColorizationGenerator,
    cfg: TrainConfig,
    id: String,
}

impl Colorizer {
    pub fn load(path: &Path) -> Result<Self> {
        let archive = Archive::load(path)?;
        let cfg: TrainConfig = archive
            .meta
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Checkpoint(format!("{} carries no training configuration", path.display())))
            .and_then(|v| serde_json::from_value(v).map_err(|e| Error::Checkpoint(e.to_string())))?;
        archive.ensure_fingerprint(&cfg.architecture_fingerprint()?)?;
        let generator = ColorizationGenerator::new(&cfg.effective_generator(), cfg.seed, cfg.precision.dtype(), &Device::Cpu)?;
        generator.params().load(&archive.group("g_mc"))?;
        let step = archive.meta.get("progress").and_then(|p| p.get("step")).and_then(|s| s.as_u64());
        let id = match step {
            Some(s) => format!("{}@step{s}", path.display()),
            None => path.display().to_string(),
        };
        Ok(Self { generator, cfg, id })
    }

    /// Shares the trainer's current weights.
    pub fn from_trainer(trainer: &Trainer, id: impl Into<String>) -> Self {
        Self {
            generator: trainer.models().g_mc.clone(),
            cfg: trainer.config().clone(),
            id: id.into(),
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn generator(&self) -> &ColorizationGenerator {
        &self.generator
    }

    /// `(n, 1, h, w)` MRI batch to `(n, 3, h, w)` colorized batch.
    pub fn infer(&self, m: &ImageBatch) -> Result<ImageBatch> {
        Ok(self.generator.forward(m)?.c_hat)
    }
}

impl ColorizationModel for Colorizer {
    fn colorize(&self, m: &Array3<f32>) -> Result<Array3<f32>> {
        Ok(self.colorize_many(std::slice::from_ref(m))?.remove(0))
    }

    fn colorize_many(&self, ms: &[Array3<f32>]) -> Result<Vec<Array3<f32>>> {
        let params = self.generator.params();
        let x = stack_arrays(ms, params.device(), params.dtype())?;
        let out = self.infer(&ImageBatch::mri(x)?)?;
        (0..ms.len()).map(|i| tensor_item(out.tensor(), i)).collect()
    }

    fn id(&self) -> String {
        self.id.clone()
    }
}
