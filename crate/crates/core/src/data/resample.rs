use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::ImageBatch;

fn check_factor(factor: usize, h: usize, w: usize) -> Result<()> {
    if factor != 2 && factor != 4 {
        return Err(Error::config(format!(
            "downsample factor must be 2 or 4, got {factor}"
        )));
    }
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::shape(format!(
            "cannot downsample {h}x{w} by {factor}: dimensions must be divisible by {factor}"
        )));
    }
    Ok(())
}

/// Mean-pools every `factor x factor` block; channels and modality are kept.
pub fn downsample(img: &ImageBatch, factor: usize) -> Result<ImageBatch> {
    let (_, _, h, w) = img.dims();
    check_factor(factor, h, w)?;
    let pooled = img.tensor().avg_pool2d((factor, factor))?;
    ImageBatch::new(pooled, img.modality())
}

/// Plane version of [`downsample`], used by the metric code.
pub fn downsample_plane(plane: &Array2<f64>, factor: usize) -> Result<Array2<f64>> {
    let (h, w) = plane.dim();
    check_factor(factor, h, w)?;
    let norm = (factor * factor) as f64;
    Ok(Array2::from_shape_fn((h / factor, w / factor), |(y, x)| {
        let mut acc = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                acc += plane[[y * factor + dy, x * factor + dx]];
            }
        }
        acc / norm
    }))
}

#[cfg(test)]
mod tests {
    use candle_core::{DType, Device, Tensor};

    use super::*;

    fn constant(v: f32, h: usize, w: usize) -> ImageBatch {
        let t = Tensor::full(v, (1, 1, h, w), &Device::Cpu).unwrap();
        ImageBatch::mri(t).unwrap()
    }

    #[test]
    fn constant_image_is_preserved() {
        let out = downsample(&constant(0.7, 8, 8), 2).unwrap();
        assert_eq!(out.dims(), (1, 1, 4, 4));
        let v = out.tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert!(v.iter().all(|&x| (x - 0.7).abs() < 1e-7));
    }

    #[test]
    fn evaluated_scales() {
        let img = constant(0.2, 256, 256);
        assert_eq!(downsample(&img, 2).unwrap().dims(), (1, 1, 128, 128));
        assert_eq!(downsample(&img, 4).unwrap().dims(), (1, 1, 64, 64));
    }

    #[test]
    fn checkerboard_pools_to_half() {
        let data: Vec<f32> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f32).collect();
        let t = Tensor::from_vec(data, (1, 1, 4, 4), &Device::Cpu).unwrap();
        let out = downsample(&ImageBatch::mri(t).unwrap(), 2).unwrap();
        let v = out.tensor().flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(v, vec![0.5; 4]);

        let plane = Array2::from_shape_fn((4, 4), |(y, x)| ((y + x) % 2) as f64);
        assert!(downsample_plane(&plane, 2).unwrap().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn non_divisible_dims_rejected() {
        let t = Tensor::zeros((1, 3, 10, 12), DType::F32, &Device::Cpu).unwrap();
        let img = ImageBatch::cryo(t).unwrap();
        assert!(matches!(downsample(&img, 4), Err(Error::Shape(_))));
        assert!(matches!(downsample(&img, 3), Err(Error::Config(_))));
    }
}
