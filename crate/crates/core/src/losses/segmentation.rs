use candle_core::Tensor;

use crate::error::{Error, Result};
use crate::nn::UNet;

/// Probabilities below this are clamped before the logarithm.
pub const CE_EPS: f64 = 1e-12;

/// `−(1/wh) Σ_k Σ_j Σ_i s log ŝ`, averaged over the batch; not normalised by `l`.
pub fn segmentation_ce(s: &Tensor, s_hat: &Tensor) -> Result<Tensor> {
    if s.dims() != s_hat.dims() {
        return Err(Error::shape(format!(
            "segmentation target {:?} and prediction {:?} differ in shape",
            s.dims(),
            s_hat.dims()
        )));
    }
    let (n, _, h, w) = s.dims4()?;
    let floor = (s * s_hat)?.sum(1)?.min_all()?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
    if floor < CE_EPS {
        log::debug!("segmentation CE: predicted probability {floor:e} clamped to {CE_EPS:e}");
    }
    let log_p = s_hat.clamp(CE_EPS, f64::MAX)?.log()?;
    let total = (s * log_p)?.sum_all()?;
    Ok(total.affine(-1.0 / (n * h * w) as f64, 0.0)?)
}

/// CE between the target map and the frozen segmenter's prediction on `cryo`
/// (the pseudo Cryosection in the full model).
pub fn segmentation_loss(s: &Tensor, cryo: &Tensor, segmenter: &UNet) -> Result<Tensor> {
    let l = s.dim(1)?;
    if l != segmenter.num_classes() {
        return Err(Error::config(format!(
            "target has {l} classes but the segmenter predicts {}",
            segmenter.num_classes()
        )));
    }
    segmentation_ce(s, &segmenter.forward_tensor(cryo)?)
}

#[cfg(test)]
mod tests {
    use candle_core::{DType, Device, Var};
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::gradcheck::check_gradient;
    use crate::nn::layers::softmax_channels;
    use crate::nn::UNetConfig;

    fn one_hot(n: usize, l: usize, h: usize, w: usize, seed: u64) -> (Tensor, Vec<usize>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n * h * w).map(|_| rng.gen_range(0..l)).collect();
        let mut v = vec![0f64; n * l * h * w];
        for b in 0..n {
            for p in 0..h * w {
                v[(b * l + labels[b * h * w + p]) * h * w + p] = 1.0;
            }
        }
        (Tensor::from_vec(v, (n, l, h, w), &Device::Cpu).unwrap(), labels)
    }

    fn s(t: Tensor) -> f64 {
        t.to_scalar::<f64>().unwrap()
    }

    #[test]
    fn perfect_and_uniform_predictions() {
        let (target, _) = one_hot(2, 4, 8, 8, 0);
        assert_eq!(s(segmentation_ce(&target, &target).unwrap()), 0.0);
        let uniform = Tensor::full(0.25f64, (2, 4, 8, 8), &Device::Cpu).unwrap();
        assert!((s(segmentation_ce(&target, &uniform).unwrap()) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn matches_triple_loop() {
        let (n, l, h, w) = (2, 3, 5, 7);
        let (target, labels) = one_hot(n, l, h, w, 1);
        let logits = Tensor::randn(0f64, 1.0, (n, l, h, w), &Device::Cpu).unwrap();
        let p = softmax_channels(&logits).unwrap();
        let pv = p.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let mut expected = 0.0;
        for b in 0..n {
            let mut acc = 0.0;
            for k in 0..l {
                for y in 0..h {
                    for x in 0..w {
                        let sv = if labels[b * h * w + y * w + x] == k { 1.0 } else { 0.0 };
                        acc += sv * pv[((b * l + k) * h + y) * w + x].ln();
                    }
                }
            }
            expected += -acc / (h * w) as f64;
        }
        expected /= n as f64;
        assert!((s(segmentation_ce(&target, &p).unwrap()) - expected).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (target, _) = one_hot(1, 3, 8, 8, 2);
        // bounded logits keep every probability well above zero, where -log p is smooth
        let logits: Vec<f64> = (0..3 * 64).map(|i| (i as f64 * 0.7).sin()).collect();
        let p = softmax_channels(&Tensor::from_vec(logits, (1, 3, 8, 8), &Device::Cpu).unwrap()).unwrap();
        let r = check_gradient(|x| segmentation_ce(&target, x), &p, 1e-4).unwrap();
        assert!(r.rel_error < 1e-4, "{}", r.rel_error);
    }

    #[test]
    fn segmenter_receives_no_gradient_and_checks_classes() {
        let cfg = UNetConfig { out_channels: 3, depth: 2, base_channels: 4, ..Default::default() };
        let net = UNet::new_frozen(&cfg, 0, DType::F64, &Device::Cpu).unwrap();
        let (target, _) = one_hot(1, 3, 16, 16, 3);
        let cp = Var::rand(0f64, 1.0, (1, 3, 16, 16), &Device::Cpu).unwrap();
        let loss = segmentation_loss(&target, cp.as_tensor(), &net).unwrap();
        let grads = loss.backward().unwrap();
        assert!(grads.get(cp.as_tensor()).is_some());
        assert!(net.params().vars().all(|(_, v)| grads.get(v.as_tensor()).is_none()));

        let (wrong, _) = one_hot(1, 4, 16, 16, 3);
        assert!(matches!(segmentation_loss(&wrong, cp.as_tensor(), &net), Err(Error::Config(_))));
    }
}
