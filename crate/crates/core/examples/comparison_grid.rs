//! Renders the ground truth / input / output comparison grid for a few phantoms,
//! colorized either by a checkpoint or by the identity reference.
//!
//! `cargo run --release --example comparison_grid -- grid.png [checkpoint]`

use std::path::PathBuf;

use cryocolor::data::{generate_phantom, PhantomSpec};
use cryocolor::grid::emit_comparison_grid;
use cryocolor::metrics::{ColorizationModel, IdentityColorizer};
use cryocolor::training::Colorizer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "grid.png".into()));
    let (model, size): (Box<dyn ColorizationModel>, usize) = match args.next() {
        Some(ckpt) => {
            let m = Colorizer::load(&PathBuf::from(ckpt))?;
            let size = m.config().image_size;
            (Box::new(m), size)
        }
        None => (Box::new(IdentityColorizer), 64),
    };
    let spec = PhantomSpec::new(size, 4, 11);
    let samples = (0..4).map(|i| generate_phantom(&spec, i)).collect::<Result<Vec<_>, _>>()?;
    let inputs: Vec<_> = samples.iter().map(|s| s.m.clone()).collect();
    let outputs = model.colorize_many(&inputs)?;
    emit_comparison_grid(&samples, &outputs, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
