use candle_core::Tensor;

use crate::error::{Error, Result};

/// `mean|m_rec − m| + mean|c_rec − c|`.
pub fn reconstruction_loss(m: &Tensor, m_rec: &Tensor, c: &Tensor, c_rec: &Tensor) -> Result<Tensor> {
    for (a, b, what) in [(m, m_rec, "MRI"), (c, c_rec, "Cryosection")] {
        if a.dims() != b.dims() {
            return Err(Error::shape(format!(
                "{what} reconstruction shape {:?} differs from original {:?}",
                b.dims(),
                a.dims()
            )));
        }
    }
    let lm = (m_rec - m)?.abs()?.mean_all()?;
    let lc = (c_rec - c)?.abs()?.mean_all()?;
    Ok((lm + lc)?)
}

#[cfg(test)]
mod tests {
    use candle_core::{Device, Tensor};

    use super::*;
    use crate::gradcheck::check_gradient;

    fn s(t: Tensor) -> f64 {
        t.to_scalar::<f64>().unwrap()
    }

    #[test]
    fn perfect_cycle_and_constant_offset() {
        let m = Tensor::rand(0f64, 0.8, (2, 1, 8, 8), &Device::Cpu).unwrap();
        let c = Tensor::rand(0f64, 1.0, (2, 3, 8, 8), &Device::Cpu).unwrap();
        assert_eq!(s(reconstruction_loss(&m, &m, &c, &c).unwrap()), 0.0);
        let shifted = m.affine(1.0, 0.1).unwrap();
        assert!((s(reconstruction_loss(&m, &shifted, &c, &c).unwrap()) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn invariant_to_batch_permutation() {
        let m = Tensor::rand(0f64, 1.0, (3, 1, 8, 8), &Device::Cpu).unwrap();
        let mr = Tensor::rand(0f64, 1.0, (3, 1, 8, 8), &Device::Cpu).unwrap();
        let c = Tensor::rand(0f64, 1.0, (3, 3, 8, 8), &Device::Cpu).unwrap();
        let cr = Tensor::rand(0f64, 1.0, (3, 3, 8, 8), &Device::Cpu).unwrap();
        let perm = Tensor::new(&[2u32, 0, 1], &Device::Cpu).unwrap();
        let p = |t: &Tensor| t.index_select(&perm, 0).unwrap();
        let a = s(reconstruction_loss(&m, &mr, &c, &cr).unwrap());
        let b = s(reconstruction_loss(&p(&m), &p(&mr), &p(&c), &p(&cr)).unwrap());
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = Tensor::rand(0f64, 1.0, (1, 1, 8, 8), &Device::Cpu).unwrap();
        let c = Tensor::rand(0f64, 1.0, (1, 3, 8, 8), &Device::Cpu).unwrap();
        let c_rec = Tensor::rand(0f64, 1.0, (1, 3, 8, 8), &Device::Cpu).unwrap();
        // keep every residual well away from the kink of |.|
        let offsets = Tensor::rand(0.05f64, 0.2, (1, 1, 8, 8), &Device::Cpu).unwrap();
        let m_rec = (&m + offsets).unwrap();
        let r = check_gradient(|x| reconstruction_loss(&m, x, &c, &c_rec), &m_rec, 1e-4).unwrap();
        assert!(r.rel_error < 1e-4, "{}", r.rel_error);
    }

    #[test]
    fn shape_mismatch() {
        let m = Tensor::zeros((1, 1, 8, 8), candle_core::DType::F64, &Device::Cpu).unwrap();
        let c = Tensor::zeros((1, 3, 8, 8), candle_core::DType::F64, &Device::Cpu).unwrap();
        assert!(reconstruction_loss(&m, &c, &c, &c).is_err());
    }
}
