use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use super::layers::{max_pool2x2, softmax_channels, Conv2d, ConvTranspose2d};
use super::params::{ParamBuilder, ParamStore};
use crate::error::{Error, Result};
use crate::image::ImageBatch;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetConfig {
    pub in_channels: usize,
    /// Must equal the dataset's class count `l`.
    pub out_channels: usize,
    pub depth: usize,
    pub base_channels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            out_channels: 8,
            depth: 4,
            base_channels: 32,
        }
    }
}

impl UNetConfig {
    pub fn with_classes(num_classes: usize) -> Self {
        Self {
            out_channels: num_classes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels != 3 {
            return Err(Error::config("the segmenter takes 3-channel Cryosection input"));
        }
        if self.out_channels < 1 || self.depth < 1 || self.base_channels == 0 {
            return Err(Error::config(format!("invalid U-Net configuration {self:?}")));
        }
        Ok(())
    }
}

/// Two 3x3 conv + ReLU layers. No normalization: without an affine term, instance
/// norm pins every ReLU threshold at the per-image channel mean, which keeps small
/// bright or dark classes from being separated.
#[derive(Debug, Clone)]
struct DoubleConv {
    first: Conv2d,
    second: Conv2d,
}

impl DoubleConv {
    fn new(pb: &ParamBuilder, in_ch: usize, out_ch: usize) -> Result<Self> {
        Ok(Self {
            first: Conv2d::new(&pb.pp("conv0"), in_ch, out_ch, 3, 1, 1)?,
            second: Conv2d::new(&pb.pp("conv1"), out_ch, out_ch, 3, 1, 1)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.first.forward(x)?.relu()?;
        Ok(self.second.forward(&h)?.relu()?)
    }
}

/// U-Net producing per-pixel class probabilities.
#[derive(Debug, Clone)]
pub struct UNet {
    cfg: UNetConfig,
    params: ParamStore,
    down: Vec<DoubleConv>,
    bottom: DoubleConv,
    ups: Vec<ConvTranspose2d>,
    up_blocks: Vec<DoubleConv>,
    head: Conv2d,
}

impl UNet {
    pub fn new(cfg: &UNetConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        Self::build(cfg, ParamBuilder::new(seed, dtype, device))
    }

    /// Parameters are detached from the autodiff graph: gradients never reach them.
    pub fn new_frozen(cfg: &UNetConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        Self::build(cfg, ParamBuilder::new(seed, dtype, device).frozen())
    }

    fn build(cfg: &UNetConfig, pb: ParamBuilder) -> Result<Self> {
        cfg.validate()?;
        let width = |i: usize| cfg.base_channels << i;
        let mut down = Vec::with_capacity(cfg.depth);
        let mut ch = cfg.in_channels;
        for i in 0..cfg.depth {
            down.push(DoubleConv::new(&pb.pp(format!("down{i}")), ch, width(i))?);
            ch = width(i);
        }
        let bottom = DoubleConv::new(&pb.pp("bottom"), ch, width(cfg.depth))?;
        let mut ups = Vec::with_capacity(cfg.depth);
        let mut up_blocks = Vec::with_capacity(cfg.depth);
        for i in (0..cfg.depth).rev() {
            ups.push(ConvTranspose2d::new(&pb.pp(format!("up{i}.tconv")), width(i + 1), width(i), 2, 2, 0)?);
            up_blocks.push(DoubleConv::new(&pb.pp(format!("up{i}.block")), 2 * width(i), width(i))?);
        }
        let head = Conv2d::new(&pb.pp("head"), cfg.base_channels, cfg.out_channels, 1, 1, 0)?;
        Ok(Self {
            cfg: cfg.clone(),
            params: pb.finish(),
            down,
            bottom,
            ups,
            up_blocks,
            head,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn num_classes(&self) -> usize {
        self.cfg.out_channels
    }

    pub fn forward(&self, c: &ImageBatch) -> Result<ImageBatch> {
        ImageBatch::seg(self.forward_tensor(c.tensor())?)
    }

    pub fn logits(&self, c: &Tensor) -> Result<Tensor> {
        let (_, ch, h, w) = c.dims4()?;
        if ch != self.cfg.in_channels {
            return Err(Error::shape(format!("segmenter expects 3 channels, got {ch}")));
        }
        let k = 1 << self.cfg.depth;
        if h % k != 0 || w % k != 0 {
            return Err(Error::shape(format!(
                "segmenter input {h}x{w} must be divisible by {k}"
            )));
        }
        let mut skips = Vec::with_capacity(self.cfg.depth);
        let mut cur = c.clone();
        for block in &self.down {
            let f = block.forward(&cur)?;
            cur = max_pool2x2(&f)?;
            skips.push(f);
        }
        cur = self.bottom.forward(&cur)?;
        for ((up, block), skip) in self.ups.iter().zip(&self.up_blocks).zip(skips.iter().rev()) {
            let u = up.forward(&cur)?;
            cur = block.forward(&Tensor::cat(&[&u, skip], 1)?)?;
        }
        self.head.forward(&cur)
    }

    /// `(n, 3, h, w)` -> `(n, l, h, w)` probabilities.
    pub fn forward_tensor(&self, c: &Tensor) -> Result<Tensor> {
        softmax_channels(&self.logits(c)?)
    }

    /// Per-pixel argmax labels, `(n, h, w)` as u32.
    pub fn predict(&self, c: &Tensor) -> Result<Tensor> {
        Ok(self.logits(c)?.argmax(1)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(l: usize) -> UNetConfig {
        UNetConfig {
            out_channels: l,
            depth: 2,
            base_channels: 4,
            ..Default::default()
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let net = UNet::new(&small(5), 1, DType::F64, &Device::Cpu).unwrap();
        let x = Tensor::rand(0f64, 1f64, (2, 3, 16, 16), &Device::Cpu).unwrap();
        let p = net.forward_tensor(&x).unwrap();
        assert_eq!(p.dims(), &[2, 5, 16, 16]);
        let sums = p.sum(1).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-6));
        let labels = net.predict(&x).unwrap().flatten_all().unwrap().to_vec1::<u32>().unwrap();
        assert!(labels.iter().all(|&v| v < 5));
    }

    #[test]
    fn frozen_network_yields_no_gradients() {
        let net = UNet::new_frozen(&small(3), 1, DType::F64, &Device::Cpu).unwrap();
        let x = candle_core::Var::rand(0f64, 1f64, (1, 3, 16, 16), &Device::Cpu).unwrap();
        let loss = net.forward_tensor(x.as_tensor()).unwrap().sqr().unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        assert!(grads.get(x.as_tensor()).is_some());
        for (_, var) in net.params().vars() {
            assert!(grads.get(var.as_tensor()).is_none());
        }
    }

    #[test]
    fn rejects_wrong_input() {
        let net = UNet::new(&small(3), 1, DType::F32, &Device::Cpu).unwrap();
        let x = Tensor::zeros((1, 1, 16, 16), DType::F32, &Device::Cpu).unwrap();
        assert!(matches!(net.forward_tensor(&x), Err(Error::Shape(_))));
        let x = Tensor::zeros((1, 3, 18, 18), DType::F32, &Device::Cpu).unwrap();
        assert!(net.forward_tensor(&x).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = UNet::new(&small(3), 5, DType::F64, &Device::Cpu).unwrap();
        for (_, var) in net.params().vars() {
            var.set(&var.as_tensor().affine(25.0, 0.01).unwrap()).unwrap();
        }
        let wave = |phase: f64| {
            let v: Vec<f64> = (0..384).map(|i| (0.37 * i as f64 + phase).sin() * 0.5 + 0.5).collect();
            Tensor::from_vec(v, (2, 3, 8, 8), &Device::Cpu).unwrap()
        };
        let (x, t) = (wave(0.0), wave(1.3));
        let objective = || (net.forward_tensor(&x).unwrap() * &t).unwrap().sum_all().unwrap();
        let grads = objective().backward().unwrap();
        for (name, var) in net.params().vars() {
            let analytic = grads.get(var.as_tensor()).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
            let base = var.as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
            for idx in (0..base.len()).step_by(base.len().div_ceil(4)) {
                let eval = |delta: f64| {
                    let mut v = base.clone();
                    v[idx] += delta;
                    var.set(&Tensor::from_vec(v, var.dims(), &Device::Cpu).unwrap()).unwrap();
                    let out = objective().to_scalar::<f64>().unwrap();
                    var.set(&Tensor::from_vec(base.clone(), var.dims(), &Device::Cpu).unwrap()).unwrap();
                    out
                };
                let numeric = (eval(1e-5) - eval(-1e-5)) / 2e-5;
                let err = (numeric - analytic[idx]).abs() / numeric.abs().max(analytic[idx].abs()).max(1e-3);
                assert!(err < 1e-4, "{name}[{idx}]: numeric {numeric}, analytic {}", analytic[idx]);
            }
        }
    }
}
