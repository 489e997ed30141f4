//! Trains the full model and the five ablations on one dataset and prints the table.
//! A step budget keeps the run short; drop it for full desk-scale rows.
//!
//! `cargo run --release --example ablation -- /tmp/ablation 10`

use std::path::PathBuf;

use cryocolor::data::generate_dataset;
use cryocolor::training::{run_ablation_suite, AblationOptions, DataConfig, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "ablation-run".into()));
    let max_steps = args.next().map(|s| s.parse()).transpose()?;

    let data = DataConfig::default();
    let manifest = generate_dataset(&data.spec(), data.n_train, data.n_test, &root.join("data"))?;
    let cfg = TrainConfig::desk(data.num_classes);
    let suite = run_ablation_suite(
        &manifest,
        &cfg,
        &root,
        &AblationOptions {
            max_steps,
            eval_batch_size: 8,
            ..Default::default()
        },
    )?;
    println!("{}", suite.table());
    for row in suite.rows.iter().filter(|r| r.error.is_some()) {
        println!("{} failed: {}", row.label, row.error.as_deref().unwrap_or_default());
    }
    Ok(())
}
