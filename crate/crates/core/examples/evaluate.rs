//! Scores a model on a dataset split with all six metrics. Without a checkpoint the
//! identity colorizer (MRI copied into three channels) is scored as a reference.
//!
//! `cargo run --release --example evaluate -- /tmp/desk/data [checkpoint]`

use std::path::PathBuf;

use cryocolor::data::{load_manifest, Split};
use cryocolor::metrics::{evaluate, ColorizationModel, IdentityColorizer};
use cryocolor::training::Colorizer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let data = PathBuf::from(args.next().ok_or("usage: evaluate <data-dir> [checkpoint]")?);
    let manifest = load_manifest(&data)?;
    let model: Box<dyn ColorizationModel> = match args.next() {
        Some(ckpt) => Box::new(Colorizer::load(&PathBuf::from(ckpt))?),
        None => Box::new(IdentityColorizer),
    };
    let report = evaluate(model.as_ref(), &manifest, Split::Test, 8)?;
    println!("{}", report.table(&model.id()));
    for e in &report.excluded {
        println!("excluded non-finite {} for sample {}", e.metric, e.index);
    }
    Ok(())
}
