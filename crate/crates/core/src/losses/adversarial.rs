use candle_core::Tensor;

use crate::error::Result;
use crate::nn::Discriminator;

/// Scores are clamped to `[ADV_EPS, 1 − ADV_EPS]` before taking logs.
pub const ADV_EPS: f64 = 1e-7;

fn mean_log(p: &Tensor) -> Result<Tensor> {
    Ok(p.clamp(ADV_EPS, 1.0 - ADV_EPS)?.log()?.mean_all()?)
}

fn mean_log_complement(p: &Tensor) -> Result<Tensor> {
    Ok(p.affine(-1.0, 1.0)?.clamp(ADV_EPS, 1.0 - ADV_EPS)?.log()?.mean_all()?)
}

/// `−[E log D(real) + E log(1 − D(fake))]` for one discriminator, from its scores.
pub fn discriminator_term(real: &Tensor, fake: &Tensor) -> Result<Tensor> {
    Ok((mean_log(real)? + mean_log_complement(fake)?)?.neg()?)
}

/// Non-saturating generator term `−E log D(fake)`.
pub fn generator_term(fake: &Tensor) -> Result<Tensor> {
    Ok(mean_log(fake)?.neg()?)
}

#[derive(Debug, Clone)]
pub struct AdversarialLosses {
    /// Minimized by the discriminators; fakes are detached.
    pub d: Tensor,
    /// Minimized by the generators.
    pub g: Tensor,
}

/// Both discriminator pairs: `D_c` judges Cryosections, `D_m` judges MRIs.
pub fn adversarial_losses(
    real_c: &Tensor,
    fake_c: &Tensor,
    real_m: &Tensor,
    fake_m: &Tensor,
    d_c: &Discriminator,
    d_m: &Discriminator,
) -> Result<AdversarialLosses> {
    let d = (discriminator_term(&d_c.forward_tensor(real_c)?, &d_c.forward_tensor(&fake_c.detach())?)?
        + discriminator_term(&d_m.forward_tensor(real_m)?, &d_m.forward_tensor(&fake_m.detach())?)?)?;
    let g = (generator_term(&d_c.forward_tensor(fake_c)?)? + generator_term(&d_m.forward_tensor(fake_m)?)?)?;
    Ok(AdversarialLosses { d, g })
}

#[cfg(test)]
mod tests {
    use candle_core::{DType, Device, Var};

    use super::*;
    use crate::gradcheck::check_gradient;
    use crate::nn::DiscriminatorConfig;

    fn scalar(t: &Tensor) -> f64 {
        t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn equilibrium_value() {
        let half = Tensor::full(0.5f64, 6, &Device::Cpu).unwrap();
        let d = (discriminator_term(&half, &half).unwrap() + discriminator_term(&half, &half).unwrap()).unwrap();
        assert!((scalar(&d) - (-4.0 * 0.5f64.ln())).abs() < 1e-12);
        assert!((scalar(&d) - 2.7726).abs() < 1e-4);
    }

    #[test]
    fn perfect_discriminator_is_near_zero() {
        let real = Tensor::ones(4, DType::F64, &Device::Cpu).unwrap();
        let fake = Tensor::zeros(4, DType::F64, &Device::Cpu).unwrap();
        let d = scalar(&discriminator_term(&real, &fake).unwrap());
        assert!(d >= 0.0 && d < 1e-6, "{d}");
        assert!(scalar(&generator_term(&fake).unwrap()).is_finite());
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        let x = Tensor::new(&[0.2f64, 0.35, 0.8, 0.6, 0.05, 0.9, 0.5, 0.42], &Device::Cpu).unwrap();
        let r = check_gradient(generator_term, &x, 1e-4).unwrap();
        assert!(r.rel_error < 1e-4, "{}", r.rel_error);
    }

    #[test]
    fn discriminator_term_does_not_reach_generator() {
        let cfg = DiscriminatorConfig { base_channels: 2, ..Default::default() };
        let dc = Discriminator::new(&cfg, 3, 32, 0, DType::F64, &Device::Cpu).unwrap();
        let dm = Discriminator::new(&cfg, 1, 32, 1, DType::F64, &Device::Cpu).unwrap();
        let fake_c = Var::rand(0f64, 1f64, (2, 3, 32, 32), &Device::Cpu).unwrap();
        let fake_m = Var::rand(0f64, 1f64, (2, 1, 32, 32), &Device::Cpu).unwrap();
        let real_c = Tensor::rand(0f64, 1f64, (2, 3, 32, 32), &Device::Cpu).unwrap();
        let real_m = Tensor::rand(0f64, 1f64, (2, 1, 32, 32), &Device::Cpu).unwrap();
        let l = adversarial_losses(&real_c, fake_c.as_tensor(), &real_m, fake_m.as_tensor(), &dc, &dm).unwrap();
        let grads = l.d.backward().unwrap();
        for v in [&fake_c, &fake_m] {
            let zero = grads
                .get(v.as_tensor())
                .map(|g| scalar(&g.abs().unwrap().sum_all().unwrap()) == 0.0)
                .unwrap_or(true);
            assert!(zero);
        }
        let grads = l.g.backward().unwrap();
        assert!(grads.get(fake_c.as_tensor()).is_some());
    }
}
