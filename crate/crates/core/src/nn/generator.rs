//! Encoder / decoder generators with squeeze-excitation gated skip connections.

use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::layers::{
    instance_norm, sigmoid, Conv2d, ConvNormAct, ConvTranspose2d, ResidualBlock, SeBlock,
    SeBlockConfig,
};
use super::multiscale::MultiscaleFuse;
use super::params::{ParamBuilder, ParamStore};
use crate::error::{Error, Result};
use crate::image::{ImageBatch, Modality};

/// Which decoder of the dual-decoder generator feeds the other one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterDecoderDirection {
    /// Pseudo-Cryosection decoder features flow into the colorization decoder.
    PseudoToColor,
    ColorToPseudo,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    /// Number of skip levels; the multiscale stage accounts for the first two halvings.
    pub depth: usize,
    pub num_residual_blocks: usize,
    pub use_multiscale: bool,
    pub use_dual_decoder: bool,
    pub use_se_skips: bool,
    pub inter_decoder_skips: bool,
    pub inter_decoder_direction: InterDecoderDirection,
    pub se_reduction: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            depth: 3,
            num_residual_blocks: 4,
            use_multiscale: true,
            use_dual_decoder: true,
            use_se_skips: true,
            inter_decoder_skips: true,
            inter_decoder_direction: InterDecoderDirection::PseudoToColor,
            se_reduction: 8,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::config(format!("generator depth must be >= 2, got {}", self.depth)));
        }
        if self.base_channels == 0 {
            return Err(Error::config("base_channels must be positive"));
        }
        if self.use_se_skips {
            SeBlockConfig::new(self.base_channels, self.se_reduction)?;
        }
        if self.inter_decoder_skips && !self.use_dual_decoder {
            return Err(Error::config(
                "inter_decoder_skips requires use_dual_decoder",
            ));
        }
        Ok(())
    }

    /// Channel width at skip level `i` (level `depth` is the bottleneck).
    pub fn level_channels(&self, i: usize) -> usize {
        if i < 2 {
            self.base_channels
        } else {
            self.base_channels << (i - 1)
        }
    }

    /// Input sides must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        1 << self.depth.max(2)
    }

    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let k = self.size_multiple();
        if h < 16 || w < 16 || h % 4 != 0 || w % 4 != 0 || h % k != 0 || w % k != 0 {
            return Err(Error::shape(format!(
                "input {h}x{w} rejected: sides must be divisible by 4 for the multiscale input \
                 and by {k} for a depth-{} encoder, and at least 16",
                self.depth
            )));
        }
        Ok(())
    }

    /// Number of squeeze-excitation blocks the forward generator instantiates.
    pub fn expected_se_blocks(&self) -> usize {
        if !self.use_se_skips {
            return 0;
        }
        let decoders = if self.use_dual_decoder { 2 } else { 1 };
        let inter = if self.inter_decoder_skips { self.depth } else { 0 };
        decoders * self.depth + inter
    }
}

#[derive(Debug, Clone)]
enum Gate {
    Se(SeBlock),
    Conv(ConvNormAct),
}

impl Gate {
    fn new(pb: &ParamBuilder, name: &str, channels: usize, cfg: &GeneratorConfig) -> Result<Self> {
        if cfg.use_se_skips {
            let se_cfg = SeBlockConfig::new(channels, cfg.se_reduction)?;
            Ok(Gate::Se(SeBlock::new(&pb.pp(format!("se_{name}")), se_cfg)?))
        } else {
            Ok(Gate::Conv(ConvNormAct::new(&pb.pp(format!("conv_{name}")), channels, channels, 3, 1)?))
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Gate::Se(se) => se.forward(x),
            Gate::Conv(c) => c.forward(x),
        }
    }
}

#[derive(Debug, Clone)]
enum EncoderEntry {
    Multiscale(MultiscaleFuse),
    Single { first: Conv2d, second: Conv2d },
}

#[derive(Debug, Clone)]
struct Encoder {
    stem: ConvNormAct,
    entry: EncoderEntry,
    downs: Vec<ConvNormAct>,
    residual: Vec<ResidualBlock>,
}

#[derive(Debug, Clone)]
struct Encoded {
    skips: Vec<Tensor>,
    bottleneck: Tensor,
}

impl Encoder {
    fn new(pb: &ParamBuilder, in_ch: usize, cfg: &GeneratorConfig) -> Result<Self> {
        let b = cfg.base_channels;
        let stem = ConvNormAct::new(&pb.pp("stem"), in_ch, b, 3, 1)?;
        let entry = if cfg.use_multiscale {
            EncoderEntry::Multiscale(MultiscaleFuse::new(&pb.pp("multiscale"), in_ch, b)?)
        } else {
            EncoderEntry::Single {
                first: Conv2d::new(&pb.pp("entry.conv0"), in_ch, b, 3, 2, 1)?,
                second: Conv2d::new(&pb.pp("entry.conv1"), b, 2 * b, 3, 2, 1)?,
            }
        };
        let downs = (2..cfg.depth)
            .map(|i| {
                ConvNormAct::new(
                    &pb.pp(format!("down{i}")),
                    cfg.level_channels(i),
                    cfg.level_channels(i + 1),
                    3,
                    2,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let residual = (0..cfg.num_residual_blocks)
            .map(|i| ResidualBlock::new(&pb.pp(format!("res{i}")), cfg.level_channels(cfg.depth)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            stem,
            entry,
            downs,
            residual,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Encoded> {
        let level0 = self.stem.forward(x)?;
        let (level1, fused) = match &self.entry {
            EncoderEntry::Multiscale(ms) => {
                let parts = ms.forward_parts(x)?;
                let fused = MultiscaleFuse::fuse(&parts)?;
                (parts.full_mid, fused)
            }
            EncoderEntry::Single { first, second } => {
                let mid = first.forward(x)?.relu()?;
                let out = second.forward(&mid)?.relu()?;
                (mid, out)
            }
        };
        let mut skips = vec![level0, level1];
        let mut cur = instance_norm(&fused)?.relu()?;
        for down in &self.downs {
            skips.push(cur.clone());
            cur = down.forward(&cur)?;
        }
        for block in &self.residual {
            cur = block.forward(&cur)?;
        }
        Ok(Encoded {
            skips,
            bottleneck: cur,
        })
    }
}

#[derive(Debug, Clone)]
struct Decoder {
    ups: Vec<ConvTranspose2d>,
    skip_gates: Vec<Gate>,
    inter_gates: Option<Vec<Gate>>,
    fuses: Vec<ConvNormAct>,
    out: Conv2d,
}

impl Decoder {
    fn new(pb: &ParamBuilder, out_ch: usize, cfg: &GeneratorConfig, receives_inter: bool) -> Result<Self> {
        let mut ups = Vec::with_capacity(cfg.depth);
        let mut skip_gates = Vec::with_capacity(cfg.depth);
        let mut inter_gates = Vec::with_capacity(cfg.depth);
        let mut fuses = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let level = pb.pp(format!("level{i}"));
            let ch = cfg.level_channels(i);
            ups.push(ConvTranspose2d::new(&level.pp("up"), cfg.level_channels(i + 1), ch, 4, 2, 1)?);
            skip_gates.push(Gate::new(&level, "skip", ch, cfg)?);
            if receives_inter {
                inter_gates.push(Gate::new(&level, "inter", ch, cfg)?);
            }
            let inputs = if receives_inter { 3 * ch } else { 2 * ch };
            fuses.push(ConvNormAct::new(&level.pp("fuse"), inputs, ch, 3, 1)?);
        }
        Ok(Self {
            ups,
            skip_gates,
            inter_gates: receives_inter.then_some(inter_gates),
            fuses,
            out: Conv2d::new(&pb.pp("out"), cfg.base_channels, out_ch, 3, 1, 1)?,
        })
    }

    /// Returns the sigmoid output and the per-level fused features (index = level).
    fn forward(&self, enc: &Encoded, leader: Option<&[Tensor]>) -> Result<(Tensor, Vec<Tensor>)> {
        let depth = self.ups.len();
        let mut feats = vec![None; depth];
        let mut cur = enc.bottleneck.clone();
        for i in (0..depth).rev() {
            let up = instance_norm(&self.ups[i].forward(&cur)?)?.relu()?;
            let mut parts = vec![up, self.skip_gates[i].forward(&enc.skips[i])?];
            match (&self.inter_gates, leader) {
                (Some(gates), Some(lead)) => parts.push(gates[i].forward(&lead[i])?),
                (None, None) => {}
                _ => return Err(Error::config("inter-decoder wiring does not match the configuration")),
            }
            cur = self.fuses[i].forward(&Tensor::cat(&parts, 1)?)?;
            feats[i] = Some(cur.clone());
        }
        let out = sigmoid(&self.out.forward(&cur)?)?;
        Ok((out, feats.into_iter().map(|f| f.expect("every level visited")).collect()))
    }
}

/// Outputs of the colorization generator.
#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    pub c_hat: ImageBatch,
    /// Pseudo Cryosection; absent when the dual decoder is disabled.
    pub c_prime: Option<ImageBatch>,
}

/// MRI -> colorized MRI generator with an optional second (pseudo Cryosection) decoder.
#[derive(Debug, Clone)]
pub struct ColorizationGenerator {
    cfg: GeneratorConfig,
    params: ParamStore,
    encoder: Encoder,
    color: Decoder,
    pseudo: Option<Decoder>,
}

impl ColorizationGenerator {
    pub fn new(cfg: &GeneratorConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        cfg.validate()?;
        let pb = ParamBuilder::new(seed, dtype, device);
        let encoder = Encoder::new(&pb.pp("enc"), 1, cfg)?;
        let color_follows =
            cfg.inter_decoder_skips && cfg.inter_decoder_direction == InterDecoderDirection::PseudoToColor;
        let pseudo_follows =
            cfg.inter_decoder_skips && cfg.inter_decoder_direction == InterDecoderDirection::ColorToPseudo;
        let color = Decoder::new(&pb.pp("dec_color"), 3, cfg, color_follows)?;
        let pseudo = if cfg.use_dual_decoder {
            Some(Decoder::new(&pb.pp("dec_pseudo"), 3, cfg, pseudo_follows)?)
        } else {
            None
        };
        Ok(Self {
            cfg: cfg.clone(),
            params: pb.finish(),
            encoder,
            color,
            pseudo,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn forward(&self, m: &ImageBatch) -> Result<GeneratorOutput> {
        if m.modality() != Modality::Mri {
            return Err(Error::shape(format!(
                "colorization generator takes an MRI batch, got {:?}",
                m.modality()
            )));
        }
        let (c_hat, c_prime) = self.forward_tensors(m.tensor())?;
        Ok(GeneratorOutput {
            c_hat: ImageBatch::cryo(c_hat)?,
            c_prime: c_prime.map(ImageBatch::cryo).transpose()?,
        })
    }

    /// `(n, 1, h, w)` -> (`c_hat`, `c_prime`), both `(n, 3, h, w)`.
    pub fn forward_tensors(&self, m: &Tensor) -> Result<(Tensor, Option<Tensor>)> {
        let (_, ch, h, w) = m.dims4()?;
        if ch != 1 {
            return Err(Error::shape(format!("colorization generator expects 1 channel, got {ch}")));
        }
        self.cfg.check_input(h, w)?;
        let enc = self.encoder.forward(m)?;
        match &self.pseudo {
            None => Ok((self.color.forward(&enc, None)?.0, None)),
            Some(pseudo) if !self.cfg.inter_decoder_skips => {
                let (c_hat, _) = self.color.forward(&enc, None)?;
                let (c_prime, _) = pseudo.forward(&enc, None)?;
                Ok((c_hat, Some(c_prime)))
            }
            Some(pseudo) => match self.cfg.inter_decoder_direction {
                InterDecoderDirection::PseudoToColor => {
                    let (c_prime, feats) = pseudo.forward(&enc, None)?;
                    let (c_hat, _) = self.color.forward(&enc, Some(&feats))?;
                    Ok((c_hat, Some(c_prime)))
                }
                InterDecoderDirection::ColorToPseudo => {
                    let (c_hat, feats) = self.color.forward(&enc, None)?;
                    let (c_prime, _) = pseudo.forward(&enc, Some(&feats))?;
                    Ok((c_hat, Some(c_prime)))
                }
            },
        }
    }
}

/// Cryosection -> MRI generator: same encoder, one decoder, 1-channel output.
#[derive(Debug, Clone)]
pub struct ReverseGenerator {
    cfg: GeneratorConfig,
    params: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
}

impl ReverseGenerator {
    pub fn new(cfg: &GeneratorConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        let cfg = GeneratorConfig {
            use_dual_decoder: false,
            inter_decoder_skips: false,
            ..cfg.clone()
        };
        cfg.validate()?;
        let pb = ParamBuilder::new(seed, dtype, device);
        let encoder = Encoder::new(&pb.pp("enc"), 3, &cfg)?;
        let decoder = Decoder::new(&pb.pp("dec"), 1, &cfg, false)?;
        Ok(Self {
            cfg,
            params: pb.finish(),
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn forward(&self, c: &ImageBatch) -> Result<ImageBatch> {
        if c.modality() != Modality::Cryo {
            return Err(Error::shape(format!(
                "reverse generator takes a Cryosection batch, got {:?}",
                c.modality()
            )));
        }
        ImageBatch::mri(self.forward_tensor(c.tensor())?)
    }

    pub fn forward_tensor(&self, c: &Tensor) -> Result<Tensor> {
        let (_, ch, h, w) = c.dims4()?;
        if ch != 3 {
            return Err(Error::shape(format!("reverse generator expects 3 channels, got {ch}")));
        }
        self.cfg.check_input(h, w)?;
        let enc = self.encoder.forward(c)?;
        Ok(self.decoder.forward(&enc, None)?.0)
    }
}
