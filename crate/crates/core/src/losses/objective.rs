use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use super::ssim::SsimComponents;
use crate::error::{Error, Result};

/// Weights of the generator objective `λ_cyc (λ_adv adv + rec) + λ_ssim ssim + λ_seg seg`.
///
/// `adv` only exists to isolate the reconstruction term (e.g. in convergence checks);
/// it defaults to 1 like the others.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub cyc: f64,
    pub adv: f64,
    pub ssim: f64,
    pub seg: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cyc: 1.0,
            adv: 1.0,
            ssim: 1.0,
            seg: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("cyc", self.cyc), ("adv", self.adv), ("ssim", self.ssim), ("seg", self.seg)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("loss weight {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Named scalar losses of one step. Absent terms are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub adv_g: f64,
    pub adv_d: f64,
    pub rec: Option<f64>,
    pub cyc: f64,
    pub ssim_m_chat: f64,
    pub ssim_c_mhat: f64,
    pub ssim_c_cprime: Option<f64>,
    pub ssim_total: f64,
    pub seg: Option<f64>,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossBundle {
    pub fn is_finite(&self) -> bool {
        [
            Some(self.adv_g),
            Some(self.adv_d),
            self.rec,
            Some(self.cyc),
            Some(self.ssim_m_chat),
            Some(self.ssim_c_mhat),
            self.ssim_c_cprime,
            Some(self.ssim_total),
            self.seg,
            Some(self.total),
        ]
        .into_iter()
        .flatten()
        .all(f64::is_finite)
    }
}

/// Differentiable generator-side terms of one step.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub adv_g: Tensor,
    pub rec: Option<Tensor>,
    pub ssim: SsimComponents,
    pub seg: Option<Tensor>,
}

fn value(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

/// Combines the generator terms into the objective and its bundle.
///
/// Any non-finite component aborts with a training error carrying the bundle.
pub fn total_objective(terms: &LossTerms, adv_d: f64, w: &LossWeights) -> Result<(Tensor, LossBundle)> {
    let cyc = match &terms.rec {
        Some(rec) => (&terms.adv_g + rec)?,
        None => terms.adv_g.clone(),
    };
    let weighted_cyc = match &terms.rec {
        Some(rec) => (terms.adv_g.affine(w.adv, 0.0)? + rec)?,
        None => terms.adv_g.affine(w.adv, 0.0)?,
    };
    let mut total = (weighted_cyc.affine(w.cyc, 0.0)? + terms.ssim.total.affine(w.ssim, 0.0)?)?;
    if let Some(seg) = &terms.seg {
        total = (total + seg.affine(w.seg, 0.0)?)?;
    }
    let bundle = LossBundle {
        adv_g: value(&terms.adv_g)?,
        adv_d,
        rec: terms.rec.as_ref().map(value).transpose()?,
        cyc: value(&cyc)?,
        ssim_m_chat: value(&terms.ssim.m_chat)?,
        ssim_c_mhat: value(&terms.ssim.c_mhat)?,
        ssim_c_cprime: terms.ssim.c_cprime.as_ref().map(value).transpose()?,
        ssim_total: value(&terms.ssim.total)?,
        seg: terms.seg.as_ref().map(value).transpose()?,
        total: value(&total)?,
        weights: *w,
    };
    if !bundle.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss, step aborted: {}",
            serde_json::to_string(&bundle).unwrap_or_default()
        )));
    }
    Ok((total, bundle))
}

#[cfg(test)]
mod tests {
    use candle_core::Device;

    use super::*;

    fn t(v: f64) -> Tensor {
        Tensor::new(v, &Device::Cpu).unwrap()
    }

    fn terms(adv: f64, rec: Option<f64>, ssim: f64, seg: Option<f64>) -> LossTerms {
        LossTerms {
            adv_g: t(adv),
            rec: rec.map(t),
            ssim: SsimComponents {
                m_chat: t(ssim),
                c_mhat: t(0.0),
                c_cprime: None,
                total: t(ssim),
            },
            seg: seg.map(t),
        }
    }

    #[test]
    fn additive_with_unit_weights() {
        let (_, b) = total_objective(&terms(1.0, Some(2.0), 0.5, Some(0.25)), 0.0, &LossWeights::default()).unwrap();
        assert!((b.total - 3.75).abs() < 1e-12);
        assert!((b.cyc - 3.0).abs() < 1e-12);
    }

    #[test]
    fn linear_in_weights() {
        let x = terms(1.0, Some(2.0), 0.5, Some(0.25));
        let w2 = LossWeights { cyc: 2.0, adv: 1.0, ssim: 2.0, seg: 2.0 };
        let (_, b) = total_objective(&x, 0.0, &w2).unwrap();
        assert!((b.total - 7.5).abs() < 1e-12);
    }

    #[test]
    fn absent_terms_stay_absent() {
        let (_, b) = total_objective(&terms(1.0, None, 0.5, None), 0.0, &LossWeights::default()).unwrap();
        assert!(b.rec.is_none() && b.seg.is_none());
        assert!((b.total - 1.5).abs() < 1e-12);
    }

    #[test]
    fn nan_aborts_with_bundle() {
        let err = total_objective(&terms(f64::NAN, Some(1.0), 0.5, None), 0.0, &LossWeights::default()).unwrap_err();
        match err {
            Error::Training(msg) => assert!(msg.contains("\"rec\":1.0")),
            e => panic!("unexpected {e}"),
        }
    }
}
