use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{colorfulness, delta_cf, fsim, ms_ssim, ssim_metric, stsim};
use crate::data::{load_triplet, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::image::{gray_to_rgb, luminance_array};

/// Column order of the report table.
pub const METRIC_NAMES: [&str; 6] = ["cf", "delta_cf", "ssim", "ms_ssim", "stsim", "fsim"];
const COLUMN_TITLES: [&str; 6] = ["CF", "ΔCF", "SSIM", "MS-SSIM", "STSIM", "FSIM"];

/// Anything that turns a `(1, h, w)` MRI slice into a `(3, h, w)` colorized slice.
pub trait ColorizationModel {
    fn colorize(&self, m: &Array3<f32>) -> Result<Array3<f32>>;

    /// Colorizes several slices; override to batch.
    fn colorize_many(&self, ms: &[Array3<f32>]) -> Result<Vec<Array3<f32>>> {
        ms.iter().map(|m| self.colorize(m)).collect()
    }

    /// Identifier recorded in report metadata.
    fn id(&self) -> String;
}

/// Replicates the MRI into three channels; the trivial reference model.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityColorizer;

impl ColorizationModel for IdentityColorizer {
    fn colorize(&self, m: &Array3<f32>) -> Result<Array3<f32>> {
        Ok(gray_to_rgb(m))
    }

    fn id(&self) -> String {
        "identity".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub index: usize,
    pub cf: f64,
    pub delta_cf: f64,
    pub ssim: f64,
    pub ms_ssim: f64,
    pub stsim: f64,
    pub fsim: f64,
}

impl ImageMetrics {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "cf" => self.cf,
            "delta_cf" => self.delta_cf,
            "ssim" => self.ssim,
            "ms_ssim" => self.ms_ssim,
            "stsim" => self.stsim,
            "fsim" => self.fsim,
            _ => return None,
        })
    }
}

/// Evaluates one sample.
///
/// Pairing: SSIM and MS-SSIM compare the colorized luminance with the input MRI; CF is
/// taken of the output; ΔCF compares the ground-truth Cryosection with the output; FSIM
/// and STSIM compare output and Cryosection luminance.
pub fn image_metrics(index: usize, m: &Array3<f32>, c: &Array3<f32>, c_hat: &Array3<f32>) -> Result<ImageMetrics> {
    if c_hat.dim() != c.dim() || c_hat.dim().0 != 3 {
        return Err(Error::Metric(format!(
            "sample {index}: output shape {:?} does not match Cryosection {:?}",
            c_hat.dim(),
            c.dim()
        )));
    }
    let m_plane = luminance_array(m)?;
    let c_plane = luminance_array(c)?;
    let out_plane = luminance_array(c_hat)?;
    Ok(ImageMetrics {
        index,
        cf: colorfulness(c_hat)?,
        delta_cf: delta_cf(c, c_hat)?,
        ssim: ssim_metric(&out_plane, &m_plane)?,
        ms_ssim: ms_ssim(&out_plane, &m_plane)?,
        stsim: stsim(&out_plane, &c_plane)?,
        fsim: fsim(&out_plane, &c_plane)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excluded {
    pub index: usize,
    pub metric: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset_checksum: String,
    pub checkpoint: String,
    pub split: String,
    /// FSIM and STSIM are computed on luminance, not their color variants.
    pub fsim_stsim_variant: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metadata: ReportMetadata,
    pub per_image: Vec<ImageMetrics>,
    pub aggregate: BTreeMap<String, Stat>,
    /// Non-finite values left out of the aggregate.
    pub excluded: Vec<Excluded>,
}

/// Mean and population std per metric over finite values, plus the excluded entries.
pub fn aggregate(per_image: &[ImageMetrics]) -> (BTreeMap<String, Stat>, Vec<Excluded>) {
    let mut agg = BTreeMap::new();
    let mut excluded = Vec::new();
    for name in METRIC_NAMES {
        let mut values = Vec::with_capacity(per_image.len());
        for row in per_image {
            let v = row.get(name).expect("known metric");
            if v.is_finite() {
                values.push(v);
            } else {
                excluded.push(Excluded {
                    index: row.index,
                    metric: name.to_string(),
                });
            }
        }
        let n = values.len();
        let (mean, std) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            let mean = values.iter().sum::<f64>() / n as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            (mean, var.sqrt())
        };
        agg.insert(name.to_string(), Stat { mean, std, count: n });
    }
    excluded.sort_by(|a, b| (a.index, &a.metric).cmp(&(b.index, &b.metric)));
    (agg, excluded)
}

impl MetricReport {
    pub fn from_rows(metadata: ReportMetadata, per_image: Vec<ImageMetrics>) -> Self {
        let (aggregate, excluded) = aggregate(&per_image);
        Self {
            metadata,
            per_image,
            aggregate,
            excluded,
        }
    }

    pub fn mean(&self, metric: &str) -> f64 {
        self.aggregate.get(metric).map_or(f64::NAN, |s| s.mean)
    }

    /// Header plus one `mean ± std` row.
    pub fn table(&self, row_label: &str) -> String {
        table(&[(row_label.to_string(), Some(self))])
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Metric(e.to_string()))
    }

    /// Writes `<stem>.json` and `<stem>.txt` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        let txt = dir.join(format!("{stem}.txt"));
        std::fs::write(&txt, self.table("Ours")).map_err(|e| Error::io(&txt, e))
    }
}

/// Fixed-width table with columns CF, ΔCF, SSIM, MS-SSIM, STSIM, FSIM; `None` rows are
/// printed as failed.
pub fn table(rows: &[(String, Option<&MetricReport>)]) -> String {
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<label_w$}", "Method");
    for t in COLUMN_TITLES {
        let _ = write!(out, " | {t:^17}");
    }
    out.push('\n');
    out.push_str(&"-".repeat(label_w + 20 * COLUMN_TITLES.len()));
    out.push('\n');
    for (label, report) in rows {
        let _ = write!(out, "{label:<label_w$}");
        for name in METRIC_NAMES {
            let cell = match report.and_then(|r| r.aggregate.get(name)) {
                Some(s) => format!("{:.3} ± {:.3}", s.mean, s.std),
                None => "failed".to_string(),
            };
            let _ = write!(out, " | {cell:^17}");
        }
        out.push('\n');
    }
    out
}

/// Runs `model` over a split and scores every sample; metric kernels run in parallel
/// worker threads, results are ordered by sample index.
pub fn evaluate(
    model: &dyn ColorizationModel,
    manifest: &DatasetManifest,
    split: Split,
    batch_size: usize,
) -> Result<MetricReport> {
    let n = match split {
        Split::Train => manifest.n_train,
        Split::Test => manifest.n_test,
    };
    if n == 0 {
        return Err(Error::Metric("cannot evaluate an empty split".into()));
    }
    let mut samples = Vec::with_capacity(n);
    for start in (0..n).step_by(batch_size.max(1)) {
        let end = (start + batch_size.max(1)).min(n);
        let triplets = (start..end)
            .map(|i| load_triplet(manifest, split, i))
            .collect::<Result<Vec<_>>>()?;
        let ms: Vec<Array3<f32>> = triplets.iter().map(|t| t.m.clone()).collect();
        let outputs = model.colorize_many(&ms)?;
        for (t, out) in triplets.into_iter().zip(outputs) {
            samples.push((t.m, t.c, out));
        }
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(samples.len());
    let chunk = samples.len().div_ceil(workers);
    let per_image = std::thread::scope(|scope| -> Result<Vec<ImageMetrics>> {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .enumerate()
            .map(|(ci, part)| {
                scope.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, (m, c, out))| image_metrics(ci * chunk + j, m, c, out))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut rows = Vec::with_capacity(samples.len());
        for h in handles {
            rows.extend(h.join().map_err(|_| Error::Metric("metric worker panicked".into()))??);
        }
        Ok(rows)
    })?;
    for row in per_image.iter().filter(|r| METRIC_NAMES.iter().any(|m| !r.get(m).unwrap().is_finite())) {
        log::warn!("sample {} has a non-finite metric and is partly excluded", row.index);
    }
    let metadata = ReportMetadata {
        dataset_checksum: manifest.checksum.clone(),
        checkpoint: model.id(),
        split: format!("{split:?}").to_lowercase(),
        fsim_stsim_variant: "luminance".into(),
    };
    Ok(MetricReport::from_rows(metadata, per_image))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(index: usize, v: f64) -> ImageMetrics {
        ImageMetrics {
            index,
            cf: v,
            delta_cf: -v,
            ssim: v,
            ms_ssim: v,
            stsim: v,
            fsim: v,
        }
    }

    #[test]
    fn aggregate_uses_population_std_and_skips_nan() {
        let rows = vec![row(0, 1.0), row(1, 3.0), row(2, f64::NAN)];
        let (agg, excluded) = aggregate(&rows);
        assert_eq!(agg["ssim"], Stat { mean: 2.0, std: 1.0, count: 2 });
        assert_eq!(agg["delta_cf"].mean, -2.0);
        assert_eq!(excluded.len(), 6);
        assert!(excluded.iter().all(|e| e.index == 2));
    }

    #[test]
    fn pairing_contract() {
        // MRI and Cryosection are distinguishable: SSIM must follow the MRI,
        // FSIM/STSIM and ΔCF the Cryosection.
        let n = 32;
        let m = Array3::from_shape_fn((1, n, n), |(_, y, x)| ((x + y) % 7) as f32 / 7.0);
        let c = Array3::from_shape_fn((3, n, n), |(ch, y, _)| if ch == 0 { y as f32 / n as f32 } else { 0.2 });
        let r_m = image_metrics(0, &m, &c, &gray_to_rgb(&m)).unwrap();
        assert!((r_m.ssim - 1.0).abs() < 1e-6 && (r_m.ms_ssim - 1.0).abs() < 1e-6);
        assert_eq!(r_m.cf, 0.0);
        let r_c = image_metrics(0, &m, &c, &c).unwrap();
        assert!((r_c.fsim - 1.0).abs() < 1e-4 && (r_c.stsim - 1.0).abs() < 1e-4);
        assert_eq!(r_c.delta_cf, 0.0);
        assert!(r_c.ssim < 0.9);
    }

    #[test]
    fn table_has_the_six_columns() {
        let meta = ReportMetadata {
            dataset_checksum: "x".into(),
            checkpoint: "y".into(),
            split: "test".into(),
            fsim_stsim_variant: "luminance".into(),
        };
        let report = MetricReport::from_rows(meta, vec![row(0, 0.5)]);
        let t = report.table("Ours");
        for title in COLUMN_TITLES {
            assert!(t.contains(title));
        }
        assert!(t.contains("0.500 ± 0.000"));
        let both = table(&[("Ours".into(), Some(&report)), ("A1".into(), None)]);
        assert!(both.lines().last().unwrap().contains("failed"));
    }
}
