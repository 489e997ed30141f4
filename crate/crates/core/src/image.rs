//! Image batches and conversions between tensors and plain arrays.

use candle_core::{DType, Device, Tensor};
use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Modality {
    Mri,
    Cryo,
    Seg,
    Feature,
}

impl Modality {
    /// Channel count fixed by the modality, if any.
    pub fn channels(self) -> Option<usize> {
        match self {
            Modality::Mri => Some(1),
            Modality::Cryo => Some(3),
            Modality::Seg | Modality::Feature => None,
        }
    }
}

/// Rank-4 `(n, ch, h, w)` tensor tagged with its modality.
#[derive(Debug, Clone)]
pub struct ImageBatch {
    data: Tensor,
    modality: Modality,
}

impl ImageBatch {
    pub fn new(data: Tensor, modality: Modality) -> Result<Self> {
        let dims = data.dims();
        if dims.len() != 4 {
            return Err(Error::shape(format!(
                "image batch must be rank 4 (n, ch, h, w), got {dims:?}"
            )));
        }
        if dims[0] == 0 {
            return Err(Error::shape("image batch must hold at least one item"));
        }
        if let Some(ch) = modality.channels() {
            if dims[1] != ch {
                return Err(Error::shape(format!(
                    "{modality:?} batch needs {ch} channel(s), got {}",
                    dims[1]
                )));
            }
        }
        Ok(Self { data, modality })
    }

    pub fn mri(data: Tensor) -> Result<Self> {
        Self::new(data, Modality::Mri)
    }

    pub fn cryo(data: Tensor) -> Result<Self> {
        Self::new(data, Modality::Cryo)
    }

    pub fn seg(data: Tensor) -> Result<Self> {
        Self::new(data, Modality::Seg)
    }

    pub fn feature(data: Tensor) -> Result<Self> {
        Self::new(data, Modality::Feature)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let d = self.data.dims();
        (d[0], d[1], d[2], d[3])
    }

    /// Stacks `(ch, h, w)` arrays into one batch.
    pub fn from_arrays(
        items: &[Array3<f32>],
        modality: Modality,
        device: &Device,
        dtype: DType,
    ) -> Result<Self> {
        Self::new(stack_arrays(items, device, dtype)?, modality)
    }

    /// Item `i` as a `(ch, h, w)` f32 array.
    pub fn item(&self, i: usize) -> Result<Array3<f32>> {
        tensor_item(&self.data, i)
    }
}

pub fn stack_arrays(items: &[Array3<f32>], device: &Device, dtype: DType) -> Result<Tensor> {
    let first = items
        .first()
        .ok_or_else(|| Error::shape("cannot stack an empty list of images"))?;
    let (c, h, w) = first.dim();
    let mut flat = Vec::with_capacity(items.len() * c * h * w);
    for item in items {
        if item.dim() != (c, h, w) {
            return Err(Error::shape(format!(
                "cannot stack images of shape {:?} and {:?}",
                first.dim(),
                item.dim()
            )));
        }
        flat.extend(item.iter().copied());
    }
    Ok(Tensor::from_vec(flat, (items.len(), c, h, w), device)?.to_dtype(dtype)?)
}

pub fn tensor_item(t: &Tensor, i: usize) -> Result<Array3<f32>> {
    let (_, c, h, w) = t.dims4()?;
    let v: Vec<f32> = t
        .get(i)?
        .to_dtype(DType::F32)?
        .flatten_all()?
        .to_vec1()?;
    Ok(Array3::from_shape_vec((c, h, w), v).expect("tensor item has (c, h, w) elements"))
}

/// Rec.601 luminance of a `(n, 3, h, w)` tensor as `(n, 1, h, w)`; 1-channel input passes through.
pub fn luminance(t: &Tensor) -> Result<Tensor> {
    let ch = t.dim(1)?;
    match ch {
        1 => Ok(t.clone()),
        3 => {
            let r = t.narrow(1, 0, 1)?.affine(LUMA_WEIGHTS[0], 0.0)?;
            let g = t.narrow(1, 1, 1)?.affine(LUMA_WEIGHTS[1], 0.0)?;
            let b = t.narrow(1, 2, 1)?.affine(LUMA_WEIGHTS[2], 0.0)?;
            Ok(((r + g)? + b)?)
        }
        _ => Err(Error::shape(format!(
            "luminance needs 1 or 3 channels, got {ch}"
        ))),
    }
}

/// Rec.601 luminance of a `(3, h, w)` or `(1, h, w)` array.
pub fn luminance_array(img: &Array3<f32>) -> Result<Array2<f64>> {
    match img.dim().0 {
        1 => Ok(img.index_axis(Axis(0), 0).mapv(f64::from)),
        3 => {
            let (_, h, w) = img.dim();
            Ok(Array2::from_shape_fn((h, w), |(y, x)| {
                LUMA_WEIGHTS[0] * f64::from(img[[0, y, x]])
                    + LUMA_WEIGHTS[1] * f64::from(img[[1, y, x]])
                    + LUMA_WEIGHTS[2] * f64::from(img[[2, y, x]])
            }))
        }
        c => Err(Error::shape(format!(
            "luminance needs 1 or 3 channels, got {c}"
        ))),
    }
}

/// Replicates a 1-channel image into 3 identical channels.
pub fn gray_to_rgb(img: &Array3<f32>) -> Array3<f32> {
    let (_, h, w) = img.dim();
    Array3::from_shape_fn((3, h, w), |(_, y, x)| img[[0, y, x]])
}
