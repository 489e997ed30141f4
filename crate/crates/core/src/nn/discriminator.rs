use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::layers::{leaky_relu, sigmoid, Conv2d, Linear};
use super::params::{ParamBuilder, ParamStore};
use crate::error::{Error, Result};
use crate::image::ImageBatch;

/// Number of stride-2 convolutions; inputs must be divisible by `2^NUM_CONV_LAYERS`.
pub const NUM_CONV_LAYERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    pub base_channels: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            leaky_slope: 0.2,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::config("discriminator base_channels must be positive"));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(Error::config(format!(
                "leaky_slope must lie in [0, 1), got {}",
                self.leaky_slope
            )));
        }
        Ok(())
    }

    fn widths(&self) -> [usize; NUM_CONV_LAYERS] {
        let b = self.base_channels;
        [b, 2 * b, 4 * b, 8 * b, 8 * b]
    }
}

/// Whole-image discriminator: five strided convolutions with LeakyReLU, flatten,
/// one linear unit and a sigmoid.
#[derive(Debug, Clone)]
pub struct Discriminator {
    cfg: DiscriminatorConfig,
    in_channels: usize,
    image_size: usize,
    params: ParamStore,
    convs: Vec<Conv2d>,
    head: Linear,
}

impl Discriminator {
    pub fn new(
        cfg: &DiscriminatorConfig,
        in_channels: usize,
        image_size: usize,
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        cfg.validate()?;
        let k = 1 << NUM_CONV_LAYERS;
        if image_size < k || image_size % k != 0 {
            return Err(Error::config(format!(
                "discriminator image size {image_size} must be a positive multiple of {k}"
            )));
        }
        let pb = ParamBuilder::new(seed, dtype, device);
        let mut convs = Vec::with_capacity(NUM_CONV_LAYERS);
        let mut ch = in_channels;
        for (i, &w) in cfg.widths().iter().enumerate() {
            convs.push(Conv2d::new(&pb.pp(format!("conv{i}")), ch, w, 4, 2, 1)?);
            ch = w;
        }
        let side = image_size / k;
        let head = Linear::new(&pb.pp("fc"), ch * side * side, 1)?;
        Ok(Self {
            cfg: cfg.clone(),
            in_channels,
            image_size,
            params: pb.finish(),
            convs,
            head,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    /// Scores in (0, 1), shape `(n,)`.
    pub fn forward(&self, img: &ImageBatch) -> Result<Tensor> {
        self.forward_tensor(img.tensor())
    }

    pub fn forward_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let (n, ch, h, w) = x.dims4()?;
        if ch != self.in_channels {
            return Err(Error::shape(format!(
                "discriminator expects {} channels, got {ch}",
                self.in_channels
            )));
        }
        if h != self.image_size || w != self.image_size {
            return Err(Error::shape(format!(
                "discriminator built for {0}x{0} inputs, got {h}x{w}",
                self.image_size
            )));
        }
        let mut cur = x.clone();
        for conv in &self.convs {
            cur = leaky_relu(&conv.forward(&cur)?, self.cfg.leaky_slope)?;
        }
        let logits = self.head.forward(&cur.reshape((n, ()))?)?;
        sigmoid(&logits.reshape(n)?)
    }
}
