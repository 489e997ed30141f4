//! A short cyclic training run with a step budget, then a resume to finish the epoch.
//!
//! `cargo run --release --example train_cycle -- /tmp/cycle 20`

use std::path::PathBuf;

use cryocolor::data::generate_dataset;
use cryocolor::training::{
    pretrain_segmenter, train, DataConfig, PretrainOptions, TrainConfig, TrainOptions, LAST_CHECKPOINT,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "cycle-run".into()));
    let budget: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);

    let data = DataConfig {
        n_train: 64,
        n_test: 8,
        ..DataConfig::default()
    };
    let manifest = generate_dataset(&data.spec(), data.n_train, data.n_test, &root.join("data"))?;
    let mut cfg = TrainConfig::desk(data.num_classes);
    cfg.epochs = 1;
    let seg = pretrain_segmenter(&manifest, &cfg, &root.join("segmenter"), &PretrainOptions::default())?;

    let run = root.join("run");
    let options = |max_steps, resume| TrainOptions {
        max_steps,
        resume,
        segmenter: Some(seg.checkpoint.clone()),
    };
    let first = train(&manifest, &cfg, &run, &options(Some(budget / 2), None))?;
    println!("stopped after {} steps; resuming from {}", first.steps, LAST_CHECKPOINT);
    let rest = train(&manifest, &cfg, &run, &options(Some(budget), Some(first.last_checkpoint)))?;

    println!("{:>5} {:>8} {:>8} {:>8} {:>8} {:>8}", "step", "total", "adv_g", "adv_d", "ssim", "seg");
    for r in first.records.iter().chain(&rest.records) {
        println!(
            "{:>5} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            r.step,
            r.losses.total,
            r.losses.adv_g,
            r.losses.adv_d,
            r.losses.ssim_total,
            r.losses.seg.unwrap_or(f64::NAN)
        );
    }
    println!("log: {}", rest.log_path.display());
    Ok(())
}
