use candle_core::Tensor;

use super::layers::Conv2d;
use super::params::ParamBuilder;
use crate::error::{Error, Result};

/// Three parallel convolutional paths over the input and its 1/2 and 1/4 mean-pooled
/// copies, all landing at 1/4 resolution with `k` channels each.
///
/// Output is `concat(path_full, path_half + path_quarter)` with `2k` channels. The full
/// path uses two stride-2 convolutions, the half path one stride-2 convolution and the
/// quarter path one stride-1 convolution; every path ends in a ReLU.
#[derive(Debug, Clone)]
pub struct MultiscaleFuse {
    full_a: Conv2d,
    full_b: Conv2d,
    half: Conv2d,
    quarter: Conv2d,
}

/// Intermediate results of [`MultiscaleFuse::forward_parts`].
#[derive(Debug, Clone)]
pub struct MultiscaleParts {
    /// Full path after its first stride-2 convolution (1/2 resolution, `k` channels).
    pub full_mid: Tensor,
    pub full: Tensor,
    pub half: Tensor,
    pub quarter: Tensor,
}

impl MultiscaleFuse {
    pub fn new(pb: &ParamBuilder, in_ch: usize, k: usize) -> Result<Self> {
        Ok(Self {
            full_a: Conv2d::new(&pb.pp("full.conv0"), in_ch, k, 3, 2, 1)?,
            full_b: Conv2d::new(&pb.pp("full.conv1"), k, k, 3, 2, 1)?,
            half: Conv2d::new(&pb.pp("half.conv0"), in_ch, k, 3, 2, 1)?,
            quarter: Conv2d::new(&pb.pp("quarter.conv0"), in_ch, k, 3, 1, 1)?,
        })
    }

    pub fn channels(&self) -> usize {
        self.full_b.out_channels()
    }

    fn check(x: &Tensor) -> Result<()> {
        let (_, _, h, w) = x.dims4()?;
        if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(Error::shape(format!(
                "multiscale input {h}x{w} must have both sides divisible by 4"
            )));
        }
        Ok(())
    }

    pub fn forward_parts(&self, x: &Tensor) -> Result<MultiscaleParts> {
        Self::check(x)?;
        let x2 = x.avg_pool2d((2, 2))?;
        let x4 = x.avg_pool2d((4, 4))?;
        let full_mid = self.full_a.forward(x)?.relu()?;
        let full = self.full_b.forward(&full_mid)?.relu()?;
        let half = self.half.forward(&x2)?.relu()?;
        let quarter = self.quarter.forward(&x4)?.relu()?;
        Ok(MultiscaleParts {
            full_mid,
            full,
            half,
            quarter,
        })
    }

    pub fn fuse(parts: &MultiscaleParts) -> Result<Tensor> {
        Ok(Tensor::cat(&[&parts.full, &(&parts.half + &parts.quarter)?], 1)?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Self::fuse(&self.forward_parts(x)?)
    }
}
