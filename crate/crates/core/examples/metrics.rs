//! The six image-quality metrics on a phantom pair under growing degradation.
//!
//! `cargo run --release --example metrics`

use cryocolor::data::{generate_phantom, PhantomSpec};
use cryocolor::image::luminance_array;
use cryocolor::metrics::{colorfulness, delta_cf, fsim, ms_ssim, ssim_metric, stsim};
use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sample = generate_phantom(&PhantomSpec::new(64, 4, 3), 0)?;
    let reference = &sample.c;
    let ref_plane = luminance_array(reference)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0f32, 1.0)?;
    let noise: Array3<f32> = Array3::from_shape_fn(reference.dim(), |_| normal.sample(&mut rng));

    println!(
        "{:>6} | {:>6} {:>7} {:>6} {:>7} {:>6} {:>6}",
        "sigma", "CF", "ΔCF", "SSIM", "MS-SSIM", "STSIM", "FSIM"
    );
    for sigma in [0.0f32, 0.02, 0.05, 0.1, 0.2] {
        let noisy = (reference + &(&noise * sigma)).mapv(|v| v.clamp(0.0, 1.0));
        let plane = luminance_array(&noisy)?;
        println!(
            "{sigma:>6.2} | {:>6.3} {:>7.3} {:>6.3} {:>7.3} {:>6.3} {:>6.3}",
            colorfulness(&noisy)?,
            delta_cf(reference, &noisy)?,
            ssim_metric(&plane, &ref_plane)?,
            ms_ssim(&plane, &ref_plane)?,
            stsim(&plane, &ref_plane)?,
            fsim(&plane, &ref_plane)?
        );
    }
    Ok(())
}
