//! Central finite-difference gradient checking for scalar functions of one tensor.

use candle_core::{DType, Tensor, Var};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    /// `‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂)`.
    pub rel_error: f64,
}

/// Compares the autodiff gradient of `f` at `x` with central differences of step `h`.
///
/// `x` must be `F64`; `f` must return a scalar.
pub fn check_gradient<F>(f: F, x: &Tensor, h: f64) -> Result<GradCheck>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    if x.dtype() != DType::F64 {
        return Err(Error::config("gradient checks run in f64"));
    }
    let var = Var::from_tensor(x)?;
    let y = f(var.as_tensor())?;
    if y.elem_count() != 1 {
        return Err(Error::shape("gradient check needs a scalar function"));
    }
    let grads = y.backward()?;
    let analytic = match grads.get(var.as_tensor()) {
        Some(g) => g.flatten_all()?.to_vec1::<f64>()?,
        None => vec![0.0; x.elem_count()],
    };

    let base = x.flatten_all()?.to_vec1::<f64>()?;
    let mut numeric = Vec::with_capacity(base.len());
    let eval = |values: Vec<f64>| -> Result<f64> {
        let t = Tensor::from_vec(values, x.shape(), x.device())?;
        Ok(f(&t)?.flatten_all()?.to_vec1::<f64>()?[0])
    };
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        numeric.push((eval(plus)? - eval(minus)?) / (2.0 * h));
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let scale = norm(&analytic).max(norm(&numeric)).max(1e-12);
    Ok(GradCheck {
        rel_error: norm(&diff) / scale,
        analytic,
        numeric,
    })
}

#[cfg(test)]
mod tests {
    use candle_core::Device;

    use super::*;

    #[test]
    fn polynomial_gradient() {
        let x = Tensor::new(&[0.3f64, -1.2, 2.0], &Device::Cpu).unwrap();
        let r = check_gradient(|t| Ok((t.powf(3.0)? * 2.0)?.sum_all()?), &x, 1e-4).unwrap();
        assert!(r.rel_error < 1e-7, "{r:?}");
        assert!((r.analytic[2] - 24.0).abs() < 1e-12);
    }
}
