//! End-to-end desk-scale run: phantom data, segmenter pretraining, cyclic training and
//! test-split evaluation of the untrained and trained generator.
//!
//! `cargo run --release --example desk_run -- /tmp/desk`

use std::path::PathBuf;

use cryocolor::data::{generate_dataset, load_manifest, Split, MANIFEST_FILE};
use cryocolor::metrics::{evaluate, table};
use cryocolor::training::{
    pretrain_segmenter, train, Colorizer, DataConfig, PretrainOptions, TrainConfig, TrainOptions, Trainer,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "desk-run".into()));
    let data = DataConfig::default();
    let data_dir = root.join("data");
    let manifest = if data_dir.join(MANIFEST_FILE).exists() {
        load_manifest(&data_dir)?
    } else {
        generate_dataset(&data.spec(), data.n_train, data.n_test, &data_dir)?
    };
    let cfg = TrainConfig::desk(data.num_classes);

    let seg = pretrain_segmenter(&manifest, &cfg, &root.join("segmenter"), &PretrainOptions::default())?;
    println!("segmenter: accuracy {:.3} after {} epochs", seg.best_accuracy, seg.history.len());

    let untrained = Trainer::new(&cfg, manifest.len(Split::Train), Some(&seg.weights), &candle_core::Device::Cpu)?;
    let before = evaluate(&Colorizer::from_trainer(&untrained, "untrained"), &manifest, Split::Test, 8)?;

    let run = root.join("run");
    let outcome = train(
        &manifest,
        &cfg,
        &run,
        &TrainOptions {
            segmenter: Some(seg.checkpoint),
            ..Default::default()
        },
    )?;
    let first: Vec<f64> = outcome.records.iter().take(10).map(|r| r.losses.total).collect();
    let last: Vec<f64> = outcome.records.iter().rev().take(10).map(|r| r.losses.total).collect();
    println!(
        "{} steps; mean total loss over the first 10 steps {:.3}, last 10 steps {:.3}",
        outcome.steps,
        first.iter().sum::<f64>() / first.len() as f64,
        last.iter().sum::<f64>() / last.len() as f64
    );
    let model = Colorizer::load(outcome.final_checkpoint.as_ref().unwrap_or(&outcome.last_checkpoint))?;
    let after = evaluate(&model, &manifest, Split::Test, 8)?;
    after.write(&run, "report")?;
    println!("{}", table(&[("untrained".into(), Some(&before)), ("trained".into(), Some(&after))]));
    Ok(())
}
