//! One checkpoint colorizing the same slice at 256, 128 and 64 pixels.
//!
//! `cargo run --release --example multiscale_inference -- /tmp/desk/run/final.ckpt`

use std::path::PathBuf;

use candle_core::{DType, Device};
use cryocolor::data::{downsample, generate_phantom, PhantomSpec};
use cryocolor::image::{luminance_array, ImageBatch, Modality};
use cryocolor::metrics::ssim_metric;
use cryocolor::training::Colorizer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ckpt = PathBuf::from(std::env::args().nth(1).ok_or("usage: multiscale_inference <checkpoint>")?);
    let model = Colorizer::load(&ckpt)?;
    let sample = generate_phantom(&PhantomSpec::new(256, model.config().segmenter.out_channels, 99), 0)?;
    let full = ImageBatch::from_arrays(std::slice::from_ref(&sample.m), Modality::Mri, &Device::Cpu, DType::F32)?;
    for factor in [1, 2, 4] {
        let m = if factor == 1 { full.clone() } else { downsample(&full, factor)? };
        let c_hat = model.infer(&m)?;
        let s = ssim_metric(&luminance_array(&c_hat.item(0)?)?, &luminance_array(&m.item(0)?)?)?;
        let (_, _, h, w) = c_hat.dims();
        println!("{h}x{w}: SSIM(output, input MRI) = {s:.3}");
    }
    Ok(())
}
