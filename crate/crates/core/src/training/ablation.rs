use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{TrainConfig, Variant};
use super::infer::Colorizer;
use super::pretrain::{pretrain_segmenter, PretrainOptions};
use super::trainer::{train, TrainOptions};
use crate::data::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, table, MetricReport};
use crate::nn::checkpoint::write_atomic;

#[derive(Debug, Clone, Default)]
pub struct AblationOptions {
    /// Pretrained segmenter shared by every row that needs one; pretrained once under
    /// `out_dir/segmenter` when absent.
    pub segmenter: Option<PathBuf>,
    /// Rows to run; all six when empty.
    pub variants: Vec<Variant>,
    pub max_steps: Option<u64>,
    pub eval_batch_size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub label: String,
    pub dataset_checksum: String,
    pub report: Option<MetricReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationSuite {
    pub rows: Vec<AblationRow>,
}

impl AblationSuite {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// Mean of `metric` for a row that succeeded.
    pub fn mean(&self, v: Variant, metric: &str) -> Option<f64> {
        self.row(v)?.report.as_ref().map(|r| r.mean(metric))
    }

    /// Fixed-width table: one row per variant, six metric columns.
    pub fn table(&self) -> String {
        let rows: Vec<_> = self.rows.iter().map(|r| (r.label.clone(), r.report.as_ref())).collect();
        table(&rows)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Metric(e.to_string()))?;
        write_atomic(&dir.join("ablation.json"), json.as_bytes())?;
        write_atomic(&dir.join("ablation.txt"), self.table().as_bytes())
    }
}

fn run_row(
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    dir: &Path,
    opts: &AblationOptions,
    segmenter: Option<&PathBuf>,
) -> Result<MetricReport> {
    let outcome = train(
        manifest,
        cfg,
        dir,
        &TrainOptions {
            max_steps: opts.max_steps,
            resume: None,
            segmenter: segmenter.cloned(),
        },
    )?;
    let ckpt = outcome.final_checkpoint.unwrap_or(outcome.last_checkpoint);
    let model = Colorizer::load(&ckpt)?;
    let report = evaluate(&model, manifest, Split::Test, opts.eval_batch_size.max(1))?;
    report.write(dir, "report")?;
    Ok(report)
}

/// Trains and evaluates the full model and each ablation with the same seed and data.
/// A failing row is recorded with its error; the suite itself only fails on setup
/// problems (e.g. the shared segmenter cannot be pretrained).
pub fn run_ablation_suite(
    manifest: &DatasetManifest,
    base_cfg: &TrainConfig,
    out_dir: &Path,
    opts: &AblationOptions,
) -> Result<AblationSuite> {
    let variants = if opts.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        opts.variants.clone()
    };
    let needs_segmenter = variants.iter().any(|v| v.flags().uses_segmenter());
    let segmenter = match (&opts.segmenter, needs_segmenter) {
        (Some(p), _) => Some(p.clone()),
        (None, true) => {
            let dir = out_dir.join("segmenter");
            let out = pretrain_segmenter(manifest, base_cfg, &dir, &PretrainOptions::default())?;
            Some(out.checkpoint)
        }
        (None, false) => None,
    };
    let mut rows = Vec::new();
    for v in variants {
        let mut cfg = base_cfg.clone();
        cfg.ablation = v.flags();
        let dir = out_dir.join(format!("{v:?}").to_lowercase());
        log::info!("ablation row {}", v.label());
        let result = cfg.validate().and_then(|_| run_row(manifest, &cfg, &dir, opts, segmenter.as_ref()));
        if let Err(e) = &result {
            log::error!("ablation row {} failed: {e}", v.label());
        }
        let (report, error) = match result {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(AblationRow {
            variant: v,
            label: v.label().to_string(),
            dataset_checksum: manifest.checksum.clone(),
            report,
            error,
        });
    }
    let suite = AblationSuite { rows };
    suite.write(out_dir)?;
    Ok(suite)
}
