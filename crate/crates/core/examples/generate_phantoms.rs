//! Writes a small phantom dataset and summarizes it.
//!
//! `cargo run --release --example generate_phantoms -- /tmp/phantoms`

use std::path::PathBuf;

use cryocolor::data::{generate_dataset, load_triplet, PhantomSpec, Split};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "phantoms".into()));
    let spec = PhantomSpec::new(64, 4, 7).with_amplitude(3.0).with_noise(0.02);
    let manifest = generate_dataset(&spec, 16, 4, &out)?;
    println!(
        "{} train / {} test triplets in {} (checksum {})",
        manifest.n_train,
        manifest.n_test,
        manifest.root.display(),
        &manifest.checksum[..16]
    );

    let sample = load_triplet(&manifest, Split::Train, 0)?;
    let mut counts = vec![0usize; sample.num_classes];
    for &l in sample.labels.iter() {
        counts[l as usize] += 1;
    }
    let total = sample.labels.len() as f64;
    for (class, n) in counts.iter().enumerate() {
        println!("class {class}: {:5.1}% of pixels, color {:?}", 100.0 * *n as f64 / total, spec.palette[class]);
    }
    let max_shift = sample.deformation.iter().fold(0f32, |a, v| a.max(v.abs()));
    println!("largest MRI displacement: {max_shift:.2} px");
    Ok(())
}
