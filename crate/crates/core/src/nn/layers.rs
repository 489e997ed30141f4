//! Building blocks shared by every network.

use candle_core::{Tensor, D};

use super::params::ParamBuilder;
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-5;

/// Numerically stable logistic function.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(x.affine(0.5, 0.0)?.tanh()?.affine(0.5, 0.5)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok((x.relu()? - x.neg()?.relu()?.affine(slope, 0.0)?)?)
}

/// Per-item, per-channel normalisation over the spatial axes (no affine terms).
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let mean = x.mean_keepdim((2, 3))?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim((2, 3))?;
    Ok(centered.broadcast_div(&var.affine(1.0, NORM_EPS)?.sqrt()?)?)
}

/// 2x2 max pooling with stride 2, built from a reshape and two reductions. The
/// backend's pooling op scales gradients by the tie fraction instead of dividing by
/// it, which shrinks every gradient routed through a unique maximum fourfold.
pub fn max_pool2x2(x: &Tensor) -> Result<Tensor> {
    let (n, ch, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("max pooling needs even sides, got {h}x{w}")));
    }
    Ok(x.reshape((n, ch, h / 2, 2, w / 2, 2))?.max(5)?.max(3)?)
}

/// Softmax over the channel axis of an `(n, ch, h, w)` tensor.
pub fn softmax_channels(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(1)?)?)
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    pub fn new(
        pb: &ParamBuilder,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(Self {
            weight: pb.weight("weight", &[out_ch, in_ch, kernel, kernel])?,
            bias: pb.zeros("bias", &[out_ch])?,
            stride,
            padding,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1, 1))?)?)
    }
}

/// Transposed convolution; kernel 4, stride 2, padding 1 doubles the spatial size.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl ConvTranspose2d {
    pub fn new(
        pb: &ParamBuilder,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        Ok(Self {
            weight: pb.weight("weight", &[in_ch, out_ch, kernel, kernel])?,
            bias: pb.zeros("bias", &[out_ch])?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(&self.weight, self.padding, 0, self.stride, 1)?;
        Ok(y.broadcast_add(&self.bias.reshape((1, (), 1, 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub fn new(pb: &ParamBuilder, in_features: usize, out_features: usize) -> Result<Self> {
        Ok(Self {
            weight: pb.weight("weight", &[out_features, in_features])?,
            bias: pb.zeros("bias", &[out_features])?,
        })
    }

    /// `x` is `(n, in_features)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.matmul(&self.weight.t()?)?.broadcast_add(&self.bias)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeBlockConfig {
    pub channels: usize,
    pub reduction: usize,
}

impl SeBlockConfig {
    pub fn new(channels: usize, reduction: usize) -> Result<Self> {
        if reduction == 0 || channels == 0 || channels % reduction != 0 {
            return Err(Error::config(format!(
                "squeeze-excitation needs channels ({channels}) divisible by the reduction ratio ({reduction})"
            )));
        }
        Ok(Self { channels, reduction })
    }

    pub fn hidden(&self) -> usize {
        self.channels / self.reduction
    }
}

/// Channel gating: global mean, bottleneck MLP, sigmoid, per-channel rescale.
#[derive(Debug, Clone)]
pub struct SeBlock {
    cfg: SeBlockConfig,
    squeeze: Linear,
    excite: Linear,
}

impl SeBlock {
    pub fn new(pb: &ParamBuilder, cfg: SeBlockConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            squeeze: Linear::new(&pb.pp("fc1"), cfg.channels, cfg.hidden())?,
            excite: Linear::new(&pb.pp("fc2"), cfg.hidden(), cfg.channels)?,
        })
    }

    pub fn config(&self) -> SeBlockConfig {
        self.cfg
    }

    /// Per-(item, channel) gate values in (0, 1), shape `(n, ch)`.
    pub fn gates(&self, f: &Tensor) -> Result<Tensor> {
        let ch = f.dim(1)?;
        if ch != self.cfg.channels {
            return Err(Error::shape(format!(
                "squeeze-excitation block expects {} channels, got {ch}",
                self.cfg.channels
            )));
        }
        let descriptor = f.mean((2, 3))?;
        let hidden = self.squeeze.forward(&descriptor)?.relu()?;
        sigmoid(&self.excite.forward(&hidden)?)
    }

    pub fn forward(&self, f: &Tensor) -> Result<Tensor> {
        let g = self.gates(f)?;
        Ok(f.broadcast_mul(&g.unsqueeze(D::Minus1)?.unsqueeze(D::Minus1)?)?)
    }
}

/// conv -> instance norm -> ReLU.
#[derive(Debug, Clone)]
pub struct ConvNormAct {
    conv: Conv2d,
}

impl ConvNormAct {
    pub fn new(pb: &ParamBuilder, in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(pb, in_ch, out_ch, kernel, stride, kernel / 2)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(instance_norm(&self.conv.forward(x)?)?.relu()?)
    }
}

#[derive(Debug, Clone)]
pub struct ResidualBlock {
    first: Conv2d,
    second: Conv2d,
}

impl ResidualBlock {
    pub fn new(pb: &ParamBuilder, channels: usize) -> Result<Self> {
        Ok(Self {
            first: Conv2d::new(&pb.pp("conv0"), channels, channels, 3, 1, 1)?,
            second: Conv2d::new(&pb.pp("conv1"), channels, channels, 3, 1, 1)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = instance_norm(&self.first.forward(x)?)?.relu()?;
        let h = instance_norm(&self.second.forward(&h)?)?;
        Ok((x + h)?)
    }
}

#[cfg(test)]
mod tests {
    use candle_core::{DType, Device};

    use super::*;

    fn builder() -> ParamBuilder {
        ParamBuilder::new(3, DType::F64, &Device::Cpu)
    }

    fn random(shape: &[usize], seed: u64) -> Tensor {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    fn values(t: &Tensor) -> Vec<f64> {
        t.flatten_all().unwrap().to_vec1::<f64>().unwrap()
    }

    #[test]
    fn sigmoid_is_bounded_and_centered() {
        let x = Tensor::new(&[-1000.0f64, -2.0, 0.0, 2.0, 1000.0], &Device::Cpu).unwrap();
        let y = values(&sigmoid(&x).unwrap());
        assert_eq!(y[2], 0.5);
        assert!((y[3] - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
        assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = random(&[2, 5, 3, 3], 1).affine(10.0, 0.0).unwrap();
        let p = softmax_channels(&x).unwrap();
        let s = values(&p.sum_keepdim(1).unwrap());
        assert!(s.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn se_zero_input_gives_zero_output() {
        let pb = builder();
        let se = SeBlock::new(&pb.pp("se_0"), SeBlockConfig::new(8, 4).unwrap()).unwrap();
        let f = Tensor::zeros((2, 8, 5, 5), DType::F64, &Device::Cpu).unwrap();
        assert!(values(&se.forward(&f).unwrap()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn se_identity_gating_with_saturated_bias() {
        let pb = builder();
        let se = SeBlock::new(&pb.pp("se_0"), SeBlockConfig::new(8, 8).unwrap()).unwrap();
        let store = pb.finish();
        store
            .get("se_0.fc2.bias")
            .unwrap()
            .set(&Tensor::full(1e3f64, 8, &Device::Cpu).unwrap())
            .unwrap();
        let f = random(&[1, 8, 4, 4], 2);
        let out = se.forward(&f).unwrap();
        for (a, b) in values(&out).iter().zip(values(&f)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn se_scales_each_channel_by_one_constant() {
        let pb = builder();
        let se = SeBlock::new(&pb.pp("se_0"), SeBlockConfig::new(16, 8).unwrap()).unwrap();
        let store = pb.finish();
        for (name, var) in store.vars() {
            var.set(&random(var.dims(), name.len() as u64).affine(3.0, 0.0).unwrap()).unwrap();
        }
        let f = random(&[2, 16, 6, 6], 9);
        let out = se.forward(&f).unwrap();
        let fv = f.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let ov = values(&out);
        for item in 0..2 {
            for ch in 0..16 {
                let base = (item * 16 + ch) * 36;
                let ratio = ov[base] / fv[base];
                assert!(ratio > 0.0 && ratio < 1.0);
                for k in 0..36 {
                    assert!((ov[base + k] / fv[base + k] - ratio).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn se_channel_mismatch_is_shape_error() {
        let pb = builder();
        let se = SeBlock::new(&pb.pp("se_0"), SeBlockConfig::new(8, 8).unwrap()).unwrap();
        let f = random(&[1, 4, 4, 4], 0);
        assert!(matches!(se.forward(&f), Err(Error::Shape(_))));
        assert!(SeBlockConfig::new(12, 8).is_err());
    }

    #[test]
    fn transposed_conv_doubles_size() {
        let pb = builder();
        let up = ConvTranspose2d::new(&pb.pp("up"), 4, 2, 4, 2, 1).unwrap();
        let y = up.forward(&random(&[1, 4, 5, 7], 3)).unwrap();
        assert_eq!(y.dims(), &[1, 2, 10, 14]);
    }

    fn finite_difference_check<F>(pb: ParamBuilder, x: Tensor, f: F)
    where
        F: Fn(&Tensor) -> Tensor,
    {
        let store = pb.finish();
        let xv = candle_core::Var::from_tensor(&x).unwrap();
        let grads = f(xv.as_tensor()).backward().unwrap();
        let mut vars = vec![xv.clone()];
        vars.extend(store.vars().map(|(_, v)| v.clone()));
        let h = 1e-5;
        for var in vars {
            let analytic = values(grads.get(var.as_tensor()).unwrap());
            let base = values(var.as_tensor());
            for idx in (0..base.len()).step_by(base.len().div_ceil(12)) {
                let eval = |delta: f64| {
                    let mut v = base.clone();
                    v[idx] += delta;
                    var.set(&Tensor::from_vec(v, var.dims(), &Device::Cpu).unwrap()).unwrap();
                    let out = f(xv.as_tensor()).to_scalar::<f64>().unwrap();
                    var.set(&Tensor::from_vec(base.clone(), var.dims(), &Device::Cpu).unwrap()).unwrap();
                    out
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let err = (numeric - analytic[idx]).abs() / numeric.abs().max(analytic[idx].abs()).max(1e-6);
                assert!(err < 1e-4, "grad mismatch at {idx}: numeric {numeric}, analytic {}", analytic[idx]);
            }
        }
    }

    #[test]
    fn max_pool_matches_backend_forward_and_finite_differences() {
        let x = random(&[2, 3, 6, 8], 6);
        let ours = values(&max_pool2x2(&x).unwrap());
        assert_eq!(ours, values(&x.max_pool2d(2).unwrap()));
        let target = random(&[2, 3, 3, 4], 7);
        finite_difference_check(builder(), x, |x| {
            (max_pool2x2(x).unwrap() * &target).unwrap().sum_all().unwrap()
        });
        assert!(max_pool2x2(&random(&[1, 1, 5, 4], 0)).is_err());
    }

    #[test]
    fn conv_layers_backprop_matches_finite_differences() {
        let pb = builder();
        let down = Conv2d::new(&pb.pp("down"), 2, 3, 3, 2, 1).unwrap();
        let up = ConvTranspose2d::new(&pb.pp("up"), 3, 2, 4, 2, 1).unwrap();
        let x = random(&[2, 2, 8, 8], 4);
        let target = random(&[2, 2, 8, 8], 5);
        finite_difference_check(pb, x, |x| {
            let y = up.forward(&instance_norm(&down.forward(x).unwrap()).unwrap()).unwrap();
            (y - &target).unwrap().sqr().unwrap().sum_all().unwrap()
        });
    }
}
