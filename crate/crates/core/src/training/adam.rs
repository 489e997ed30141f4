use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;

use super::config::AdamConfig;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

/// Adam with explicit, serializable state (moments keyed by parameter name).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    cfg: AdamConfig,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64, cfg: AdamConfig) -> Result<Self> {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, var) in params.vars() {
            m.insert(name.to_string(), var.as_tensor().zeros_like()?);
            v.insert(name.to_string(), var.as_tensor().zeros_like()?);
        }
        Ok(Self { lr, cfg, step: 0, m, v })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// One update of every parameter that received a gradient.
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        for (name, var) in params.vars() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            // gradients may still reference the backward graph; keep the moments graph-free
            let g = g.detach();
            let m = self.m.get_mut(name).expect("moment per parameter");
            let v = self.v.get_mut(name).expect("moment per parameter");
            *m = (m.affine(b1, 0.0)? + g.affine(1.0 - b1, 0.0)?)?.detach();
            *v = (v.affine(b2, 0.0)? + g.sqr()?.affine(1.0 - b2, 0.0)?)?.detach();
            let m_hat = m.affine(1.0 / bias1, 0.0)?;
            let denom = v.affine(1.0 / bias2, 0.0)?.sqrt()?.affine(1.0, self.cfg.eps)?;
            let update = (m_hat / denom)?.affine(self.lr, 0.0)?;
            var.set(&(var.as_tensor() - update)?.detach())?;
        }
        Ok(())
    }

    /// Moments as `m/<name>` and `v/<name>`.
    pub fn state_tensors(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        for (k, t) in &self.m {
            out.insert(format!("m/{k}"), t.clone());
        }
        for (k, t) in &self.v {
            out.insert(format!("v/{k}"), t.clone());
        }
        out
    }

    pub fn load_state(&mut self, step: u64, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        let dtype_device = self.m.values().next().map(|t| (t.dtype(), t.device().clone()));
        for (prefix, target) in [("m/", &mut self.m), ("v/", &mut self.v)] {
            for (name, slot) in target.iter_mut() {
                let t = tensors
                    .get(&format!("{prefix}{name}"))
                    .ok_or_else(|| Error::Checkpoint(format!("optimizer state lacks {prefix}{name}")))?;
                if t.dims() != slot.dims() {
                    return Err(Error::Checkpoint(format!("optimizer state {prefix}{name} has the wrong shape")));
                }
                let (dtype, device) = dtype_device.clone().expect("non-empty");
                *slot = t.to_dtype(dtype)?.to_device(&device)?;
            }
        }
        self.step = step;
        Ok(())
    }
}
