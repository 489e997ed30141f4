//! Pretrains the U-Net segmenter on (Cryosection, label) pairs until it reaches the
//! configured pixel accuracy.
//!
//! `cargo run --release --example pretrain_segmenter -- /tmp/seg`

use std::path::PathBuf;

use cryocolor::data::generate_dataset;
use cryocolor::training::{pretrain_segmenter, DataConfig, PretrainOptions, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "segmenter-run".into()));
    let data = DataConfig {
        n_train: 48,
        n_test: 8,
        ..DataConfig::default()
    };
    let manifest = generate_dataset(&data.spec(), data.n_train, data.n_test, &root.join("data"))?;

    let cfg = TrainConfig::desk(data.num_classes);
    let outcome = pretrain_segmenter(&manifest, &cfg, &root.join("segmenter"), &PretrainOptions::default())?;
    for e in &outcome.history {
        println!("epoch {:3}  loss {:.4}  pixel accuracy {:.3}", e.epoch, e.loss, e.accuracy);
    }
    println!(
        "best accuracy {:.3} (target {:.2} {}); weights in {}",
        outcome.best_accuracy,
        cfg.pretrain.target_accuracy,
        if outcome.reached_target { "reached" } else { "missed" },
        outcome.checkpoint.display()
    );
    Ok(())
}
