//! TOML configuration with dotted-key overrides.

use std::path::Path;

use candle_core::DType;
use serde::{Deserialize, Serialize};

use crate::data::PhantomSpec;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, SsimConstants};
use crate::nn::checkpoint::fingerprint;
use crate::nn::{DiscriminatorConfig, GeneratorConfig, UNetConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

/// Component removals; at most one may be set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    /// A1: drop the reconstruction term from the cyclic loss.
    pub disable_cycle_rec: bool,
    /// A2: drop the segmentation loss.
    pub disable_seg_loss: bool,
    /// A3: drop the segmentation loss and the pseudo-Cryosection decoder.
    pub disable_seg_and_pseudo: bool,
    /// A4: no pseudo decoder; the segmenter sees the cycle-reconstructed Cryosection.
    pub seg_on_reconstructed_cryo: bool,
    /// A5: replace squeeze-excitation gates with plain convolutions.
    pub disable_se_blocks: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    A1,
    A2,
    A3,
    A4,
    A5,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Variant::Full, Variant::A1, Variant::A2, Variant::A3, Variant::A4, Variant::A5];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Ours",
            Variant::A1 => "A1: -cycle",
            Variant::A2 => "A2: -seg",
            Variant::A3 => "A3: -seg, -pse. cryo",
            Variant::A4 => "A4: +seg on rec. cryo",
            Variant::A5 => "A5: -comp. activation",
        }
    }

    pub fn flags(self) -> AblationFlags {
        let mut f = AblationFlags::default();
        match self {
            Variant::Full => {}
            Variant::A1 => f.disable_cycle_rec = true,
            Variant::A2 => f.disable_seg_loss = true,
            Variant::A3 => f.disable_seg_and_pseudo = true,
            Variant::A4 => f.seg_on_reconstructed_cryo = true,
            Variant::A5 => f.disable_se_blocks = true,
        }
        f
    }
}

impl AblationFlags {
    pub fn validate(&self) -> Result<()> {
        if self.count() > 1 {
            return Err(Error::config(format!("ablation flags are mutually exclusive, got {self:?}")));
        }
        Ok(())
    }

    fn count(&self) -> usize {
        [
            self.disable_cycle_rec,
            self.disable_seg_loss,
            self.disable_seg_and_pseudo,
            self.seg_on_reconstructed_cryo,
            self.disable_se_blocks,
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }

    pub fn variant(&self) -> Result<Variant> {
        self.validate()?;
        Ok(Variant::ALL
            .into_iter()
            .find(|v| v.flags() == *self)
            .expect("at most one flag set"))
    }

    pub fn uses_segmenter(&self) -> bool {
        !(self.disable_seg_loss || self.disable_seg_and_pseudo)
    }

    pub fn uses_pseudo_decoder(&self) -> bool {
        !(self.disable_seg_and_pseudo || self.seg_on_reconstructed_cryo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop once train pixel accuracy reaches this.
    pub target_accuracy: f64,
    /// Use only the first `n` training pairs (46 mirrors the paper's labelled subset).
    pub max_samples: Option<usize>,
    pub beta1: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 4,
            target_accuracy: 0.9,
            max_samples: None,
            beta1: 0.9,
        }
    }
}

/// Everything needed to reproduce a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub version: u32,
    pub seed: u64,
    pub image_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_generators: f64,
    pub lr_discriminators: f64,
    pub lr_segmenter_pretrain: f64,
    pub adam: AdamConfig,
    /// Checkpoint every this many steps (0: final checkpoint only).
    pub checkpoint_every: u64,
    pub precision: Precision,
    pub weights: LossWeights,
    pub ssim: SsimConstants,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub segmenter: UNetConfig,
    pub ablation: AblationFlags,
    /// Also show the pseudo Cryosection to `D_c` as a fake.
    pub d_sees_pseudo: bool,
    /// Feed the ground-truth Cryosection to the segmenter (literal reading of the CE term).
    pub seg_on_literal_c: bool,
    /// Keep optimizing the segmenter during cyclic training.
    pub unfreeze_segmenter: bool,
    pub pretrain: PretrainConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainConfig {
    /// Published protocol: 150 epochs, batch 28, 256 px, learning rates 1e-3 / 1e-4 / 1e-6.
    pub fn paper() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            image_size: 256,
            epochs: 150,
            batch_size: 28,
            lr_generators: 1e-3,
            lr_discriminators: 1e-4,
            lr_segmenter_pretrain: 1e-6,
            adam: AdamConfig::default(),
            checkpoint_every: 1000,
            precision: Precision::F32,
            weights: LossWeights::default(),
            ssim: SsimConstants::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            segmenter: UNetConfig::default(),
            ablation: AblationFlags::default(),
            d_sees_pseudo: false,
            seg_on_literal_c: false,
            unfreeze_segmenter: false,
            pretrain: PretrainConfig::default(),
        }
    }

    /// Small networks for 64×64 phantoms with `num_classes` labels; CPU-friendly.
    pub fn desk(num_classes: usize) -> Self {
        Self {
            image_size: 64,
            epochs: 5,
            batch_size: 8,
            lr_segmenter_pretrain: 1e-3,
            checkpoint_every: 0,
            generator: GeneratorConfig {
                base_channels: 8,
                depth: 3,
                num_residual_blocks: 2,
                ..GeneratorConfig::default()
            },
            discriminator: DiscriminatorConfig {
                base_channels: 8,
                ..DiscriminatorConfig::default()
            },
            segmenter: UNetConfig {
                out_channels: num_classes,
                depth: 3,
                base_channels: 8,
                ..UNetConfig::default()
            },
            pretrain: PretrainConfig {
                epochs: 200,
                batch_size: 4,
                ..PretrainConfig::default()
            },
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        for (name, lr) in [
            ("lr_generators", self.lr_generators),
            ("lr_discriminators", self.lr_discriminators),
            ("lr_segmenter_pretrain", self.lr_segmenter_pretrain),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::config(format!("{name} must be > 0, got {lr}")));
            }
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch_size and epochs must be >= 1"));
        }
        if self.pretrain.batch_size == 0 {
            return Err(Error::config("pretrain.batch_size must be >= 1"));
        }
        self.ablation.validate()?;
        self.weights.validate()?;
        self.ssim.validate()?;
        self.effective_generator().validate()?;
        self.discriminator.validate()?;
        self.segmenter.validate()?;
        self.effective_generator().check_input(self.image_size, self.image_size)?;
        if self.image_size % 32 != 0 {
            return Err(Error::config(format!(
                "image_size {} must be a multiple of 32 for the discriminators",
                self.image_size
            )));
        }
        Ok(())
    }

    /// Generator configuration after applying the ablation flags.
    pub fn effective_generator(&self) -> GeneratorConfig {
        let mut g = self.generator.clone();
        if !self.ablation.uses_pseudo_decoder() {
            g.use_dual_decoder = false;
            g.inter_decoder_skips = false;
        }
        if self.ablation.disable_se_blocks {
            g.use_se_skips = false;
        }
        g
    }

    /// Hash of everything that determines parameter shapes and numerics.
    pub fn architecture_fingerprint(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Arch<'a> {
            image_size: usize,
            precision: Precision,
            generator: GeneratorConfig,
            discriminator: &'a DiscriminatorConfig,
            segmenter: Option<&'a UNetConfig>,
        }
        fingerprint(&Arch {
            image_size: self.image_size,
            precision: self.precision,
            generator: self.effective_generator(),
            discriminator: &self.discriminator,
            segmenter: self.ablation.uses_segmenter().then_some(&self.segmenter),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Applies `a.b.c=value` overrides; see [`apply_overrides`].
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let cfg: Self = apply_overrides(self, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Options for the `gen-data` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub version: u32,
    pub n_train: usize,
    pub n_test: usize,
    pub image_size: usize,
    pub num_classes: usize,
    pub noise_sigma: f32,
    pub deformation_amplitude: f32,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            n_train: 200,
            n_test: 40,
            image_size: 64,
            num_classes: 4,
            noise_sigma: 0.02,
            deformation_amplitude: 3.0,
            seed: 7,
        }
    }
}

impl DataConfig {
    pub fn spec(&self) -> PhantomSpec {
        PhantomSpec::new(self.image_size, self.num_classes, self.seed)
            .with_noise(self.noise_sigma)
            .with_amplitude(self.deformation_amplitude)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.spec().validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }
}

/// Applies dotted-key overrides to any serializable configuration.
///
/// Keys must already exist; values are parsed as the type of the value they replace
/// (booleans, integers, floats, strings; `none` clears an optional value).
pub fn apply_overrides<T>(cfg: &T, overrides: &[String]) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let mut root = toml::Value::try_from(cfg).map_err(|e| Error::config(e.to_string()))?;
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override `{item}` is not of the form key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().expect("split yields at least one part");
        let mut table = root
            .as_table_mut()
            .ok_or_else(|| Error::config("configuration root is not a table"))?;
        for p in parents {
            table = table
                .get_mut(*p)
                .and_then(|v| v.as_table_mut())
                .ok_or_else(|| Error::config(format!("unknown configuration section `{p}` in `{key}`")))?;
        }
        let clear = raw.eq_ignore_ascii_case("none");
        match table.get(*last) {
            // `none` clears an optional value (serialized as an absent key)
            Some(existing) if clear && !existing.is_str() => {
                table.remove(*last);
            }
            Some(existing) => {
                let v = parse_like(existing, raw, key)?;
                table.insert((*last).to_string(), v);
            }
            None if clear => {}
            None => {
                // absent optional field, or an unknown key rejected on deserialization
                table.insert((*last).to_string(), parse_untyped(raw));
            }
        }
    }
    root.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))
}

fn parse_untyped(raw: &str) -> toml::Value {
    if let Ok(i) = raw.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = raw.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(raw.trim_matches('"').to_string())
    }
}

fn parse_like(existing: &toml::Value, raw: &str, key: &str) -> Result<toml::Value> {
    let bad = |ty: &str| Error::config(format!("override `{key}`: `{raw}` is not a valid {ty}"));
    Ok(match existing {
        toml::Value::Boolean(_) => toml::Value::Boolean(raw.parse().map_err(|_| bad("boolean"))?),
        toml::Value::Integer(_) => toml::Value::Integer(raw.parse().map_err(|_| bad("integer"))?),
        toml::Value::Float(_) => toml::Value::Float(raw.parse().map_err(|_| bad("float"))?),
        toml::Value::String(_) => toml::Value::String(raw.trim_matches('"').to_string()),
        _ => return Err(Error::config(format!("override `{key}` targets a section or list, not a value"))),
    })
}
