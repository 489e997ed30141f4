//! Command-line front end: `gen-data`, `train-seg`, `train`, `infer`, `eval`, `ablate`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array3;
use serde::Serialize;

use crate::data::{generate_dataset, load_manifest, load_triplet, Split};
use crate::error::{Error, Result};
use crate::grid::emit_comparison_grid;
use crate::metrics::{evaluate, ColorizationModel};
use crate::nn::checkpoint::write_atomic;
use crate::training::{
    apply_overrides, pretrain_segmenter, run_ablation_suite, train, AblationOptions, Colorizer, DataConfig,
    PretrainOptions, TrainConfig, TrainOptions, Variant, CONFIG_FILE, FINAL_CHECKPOINT, LAST_CHECKPOINT,
};

/// Selects the compute device; only the CPU backend is compiled in.
pub const DEVICE_ENV: &str = "CRYOCOLOR_DEVICE";

#[derive(Debug, Parser)]
#[command(name = "cryocolor", version, about = "Structure-preserving MRI colorization")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set batch_size=4` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Args)]
struct TrainConfigArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Starting point when no config file is given.
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain the Cryosection segmenter.
    TrainSeg {
        #[command(flatten)]
        cfg: TrainConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run cyclic adversarial training.
    Train {
        #[command(flatten)]
        cfg: TrainConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pretrained segmenter checkpoint.
        #[arg(long)]
        segmenter: Option<PathBuf>,
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Colorize one MRI image.
    Infer {
        /// Checkpoint file, run directory, or tag (`final`, `last`).
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Report directory (defaults to the checkpoint's directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a comparison grid of the first N samples.
        #[arg(long, default_value_t = 0)]
        grid: usize,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
    },
    /// Train and evaluate the full model and ablations A1..A5.
    Ablate {
        #[command(flatten)]
        cfg: TrainConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        segmenter: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
        /// Subset of rows (full, a1..a5).
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Usage(msg),
            other => Failure::Runtime(other),
        }
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("\nconfiguration keys (defaults):\n{}", schema_help());
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn schema_help() -> String {
    let train = TrainConfig::desk(4).to_toml_string().unwrap_or_default();
    let data = DataConfig::default().to_toml_string().unwrap_or_default();
    format!("# training (train, train-seg, ablate)\n{train}\n# data (gen-data)\n{data}")
}

fn check_device() -> Result<()> {
    match std::env::var(DEVICE_ENV).ok().as_deref().map(str::to_ascii_lowercase).as_deref() {
        None | Some("") | Some("cpu") => Ok(()),
        Some(other) => Err(Error::Training(format!(
            "{DEVICE_ENV}={other} is not available; this build only has the CPU backend"
        ))),
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn data_config(args: &ConfigArgs) -> Result<DataConfig> {
    let base = match &args.config {
        Some(p) => DataConfig::from_toml_str(&read_text(p)?)?,
        None => DataConfig::default(),
    };
    let cfg: DataConfig = apply_overrides(&base, &args.overrides)?;
    cfg.spec().validate()?;
    Ok(cfg)
}

fn train_config(args: &TrainConfigArgs, num_classes: usize) -> Result<TrainConfig> {
    let base = match (&args.cfg.config, args.preset) {
        (Some(p), _) => TrainConfig::from_toml_str(&read_text(p)?)?,
        (None, Preset::Desk) => TrainConfig::desk(num_classes),
        (None, Preset::Paper) => TrainConfig {
            segmenter: crate::nn::UNetConfig::with_classes(num_classes),
            ..TrainConfig::paper()
        },
    };
    base.with_overrides(&args.cfg.overrides)
}

fn write_resolved<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::config(e.to_string()))?;
    write_atomic(&dir.join(name), text.as_bytes())
}

/// Accepts a checkpoint file, a run directory, or a bare tag such as `final`.
fn resolve_checkpoint(p: &Path) -> Result<PathBuf> {
    if p.is_file() {
        return Ok(p.to_path_buf());
    }
    if p.is_dir() {
        for name in [FINAL_CHECKPOINT, LAST_CHECKPOINT] {
            if p.join(name).is_file() {
                return Ok(p.join(name));
            }
        }
    }
    let tagged = p.with_extension("ckpt");
    if tagged.is_file() {
        return Ok(tagged);
    }
    Err(Error::Checkpoint(format!("no checkpoint found at {}", p.display())))
}

fn read_mri_png(path: &Path) -> Result<Array3<f32>> {
    let img = image::open(path)
        .map_err(|e| Error::dataset(path, e.to_string()))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(Array3::from_shape_fn((1, h as usize, w as usize), |(_, y, x)| {
        img.get_pixel(x as u32, y as u32)[0] as f32 / 255.0
    }))
}

fn write_rgb_png(path: &Path, c: &Array3<f32>) -> Result<()> {
    let (_, h, w) = c.dim();
    let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let img = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        image::Rgb([q(c[[0, y, x]]), q(c[[1, y, x]]), q(c[[2, y, x]])])
    });
    let mut bytes = std::io::Cursor::new(Vec::new());
    img.write_to(&mut bytes, image::ImageFormat::Png)
        .map_err(|e| Error::dataset(path, e.to_string()))?;
    write_atomic(path, &bytes.into_inner())
}

fn parse_variant(s: &str) -> Result<Variant> {
    match s.trim().to_ascii_lowercase().as_str() {
        "full" | "ours" => Ok(Variant::Full),
        "a1" => Ok(Variant::A1),
        "a2" => Ok(Variant::A2),
        "a3" => Ok(Variant::A3),
        "a4" => Ok(Variant::A4),
        "a5" => Ok(Variant::A5),
        other => Err(Error::config(format!("unknown ablation row `{other}` (full, a1..a5)"))),
    }
}

#[derive(Serialize)]
struct Invocation<'a> {
    command: &'a str,
    checkpoint: String,
    input: String,
    output: String,
}

fn dispatch(cmd: Command) -> std::result::Result<(), Failure> {
    check_device().map_err(Failure::Runtime)?;
    match cmd {
        Command::GenData { cfg, out } => {
            let data = data_config(&cfg)?;
            let manifest = generate_dataset(&data.spec(), data.n_train, data.n_test, &out)?;
            write_resolved(&out, "data.toml", &data)?;
            println!("wrote {} samples to {}", manifest.total(), out.display());
        }
        Command::TrainSeg { cfg, data, out, resume } => {
            let manifest = load_manifest(&data)?;
            let cfg = train_config(&cfg, manifest.spec.num_classes)?;
            write_resolved(&out, CONFIG_FILE, &cfg)?;
            let outcome = pretrain_segmenter(&manifest, &cfg, &out, &PretrainOptions { resume, stop_after: None })?;
            println!(
                "segmenter pixel accuracy {:.4} ({} epochs, target {}reached); weights in {}",
                outcome.best_accuracy,
                outcome.history.len(),
                if outcome.reached_target { "" } else { "not " },
                outcome.checkpoint.display()
            );
        }
        Command::Train {
            cfg,
            data,
            out,
            segmenter,
            resume,
            max_steps,
        } => {
            let manifest = load_manifest(&data)?;
            let cfg = train_config(&cfg, manifest.spec.num_classes)?;
            let outcome = train(&manifest, &cfg, &out, &TrainOptions { max_steps, resume, segmenter })?;
            let ckpt = outcome.final_checkpoint.as_ref().unwrap_or(&outcome.last_checkpoint);
            println!("{} steps; checkpoint {}", outcome.steps, ckpt.display());
        }
        Command::Infer { ckpt, input, out } => {
            let ckpt = resolve_checkpoint(&ckpt)?;
            let model = Colorizer::load(&ckpt)?;
            let m = read_mri_png(&input)?;
            let c_hat = model.colorize(&m)?;
            write_rgb_png(&out, &c_hat)?;
            let inv = Invocation {
                command: "infer",
                checkpoint: ckpt.display().to_string(),
                input: input.display().to_string(),
                output: out.display().to_string(),
            };
            let record = out.with_extension("run.toml");
            let dir = record.parent().unwrap_or(Path::new("."));
            write_resolved(dir, &record.file_name().unwrap().to_string_lossy(), &inv)?;
        }
        Command::Eval {
            ckpt,
            data,
            split,
            out,
            grid,
            batch_size,
        } => {
            let split = match split.as_str() {
                "test" => Split::Test,
                "train" => Split::Train,
                other => return Err(Failure::Usage(format!("unknown split `{other}` (train, test)"))),
            };
            let ckpt = resolve_checkpoint(&ckpt)?;
            let manifest = load_manifest(&data)?;
            let model = Colorizer::load(&ckpt)?;
            let report = evaluate(&model, &manifest, split, batch_size)?;
            let dir = out.unwrap_or_else(|| ckpt.parent().map(Path::to_path_buf).unwrap_or_default());
            report.write(&dir, "report")?;
            write_resolved(&dir, "eval.toml", model.config())?;
            println!("{}", report.table("model"));
            if grid > 0 {
                let n = grid.min(manifest.len(split));
                let samples = (0..n).map(|i| load_triplet(&manifest, split, i)).collect::<Result<Vec<_>>>()?;
                let ms: Vec<_> = samples.iter().map(|s| s.m.clone()).collect();
                let outputs = model.colorize_many(&ms)?;
                emit_comparison_grid(&samples, &outputs, &dir.join("grid.png"))?;
            }
        }
        Command::Ablate {
            cfg,
            data,
            out,
            segmenter,
            max_steps,
            variants,
        } => {
            let manifest = load_manifest(&data)?;
            let cfg = train_config(&cfg, manifest.spec.num_classes)?;
            let variants = variants.iter().map(|v| parse_variant(v)).collect::<Result<Vec<_>>>()?;
            write_resolved(&out, CONFIG_FILE, &cfg)?;
            let suite = run_ablation_suite(
                &manifest,
                &cfg,
                &out,
                &AblationOptions {
                    segmenter,
                    variants,
                    max_steps,
                    eval_batch_size: 8,
                },
            )?;
            println!("{}", suite.table());
            if suite.rows.iter().any(|r| r.error.is_some()) {
                return Err(Failure::Runtime(Error::Training("one or more ablation rows failed".into())));
            }
        }
    }
    Ok(())
}
