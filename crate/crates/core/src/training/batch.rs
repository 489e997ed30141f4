use candle_core::{DType, Device, Tensor};

use crate::data::{load_triplet, DatasetManifest, Split, TripletSample};
use crate::error::{Error, Result};
use crate::image::stack_arrays;

/// Aligned `(m, c, s)` tensors for a set of sample indices.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub ids: Vec<usize>,
    /// `(n, 1, h, w)`
    pub m: Tensor,
    /// `(n, 3, h, w)`
    pub c: Tensor,
    /// One-hot `(n, l, h, w)`
    pub s: Tensor,
}

impl TrainBatch {
    pub fn from_samples(ids: Vec<usize>, samples: &[TripletSample], dtype: DType, device: &Device) -> Result<Self> {
        if samples.is_empty() || ids.len() != samples.len() {
            return Err(Error::shape("a batch needs one id per sample and at least one sample"));
        }
        let ms: Vec<_> = samples.iter().map(|t| t.m.clone()).collect();
        let cs: Vec<_> = samples.iter().map(|t| t.c.clone()).collect();
        let ss: Vec<_> = samples.iter().map(|t| t.one_hot()).collect();
        Ok(Self {
            ids,
            m: stack_arrays(&ms, device, dtype)?,
            c: stack_arrays(&cs, device, dtype)?,
            s: stack_arrays(&ss, device, dtype)?,
        })
    }

    pub fn load(manifest: &DatasetManifest, split: Split, ids: &[usize], dtype: DType, device: &Device) -> Result<Self> {
        let samples = ids
            .iter()
            .map(|&i| load_triplet(manifest, split, i))
            .collect::<Result<Vec<_>>>()?;
        Self::from_samples(ids.to_vec(), &samples, dtype, device)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub(crate) fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}
