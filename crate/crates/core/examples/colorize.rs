//! Colorizes one phantom MRI with a trained checkpoint and writes the input, output
//! and ground truth as PNG files.
//!
//! `cargo run --release --example colorize -- /tmp/cycle/run/last.ckpt /tmp/colorized`

use std::path::{Path, PathBuf};

use cryocolor::data::{generate_phantom, PhantomSpec};
use cryocolor::image::gray_to_rgb;
use cryocolor::metrics::ColorizationModel;
use cryocolor::training::Colorizer;
use ndarray::Array3;

fn save(path: &Path, img: &Array3<f32>) -> Result<(), Box<dyn std::error::Error>> {
    let (_, h, w) = img.dim();
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb([q(img[[0, y, x]]), q(img[[1, y, x]]), q(img[[2, y, x]])])
    })
    .save(path)?;
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let ckpt = PathBuf::from(args.next().ok_or("usage: colorize <checkpoint> [out-dir]")?);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "colorized".into()));
    std::fs::create_dir_all(&out)?;

    let model = Colorizer::load(&ckpt)?;
    let size = model.config().image_size;
    let sample = generate_phantom(&PhantomSpec::new(size, model.config().segmenter.out_channels, 2024), 0)?;
    let c_hat = model.colorize(&sample.m)?;

    save(&out.join("mri.png"), &gray_to_rgb(&sample.m))?;
    save(&out.join("colorized.png"), &c_hat)?;
    save(&out.join("cryosection.png"), &sample.c)?;
    println!("{} -> {}", model.id(), out.display());
    Ok(())
}
