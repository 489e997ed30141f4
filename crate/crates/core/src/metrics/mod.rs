//! Evaluation measures and test-set reports.

mod colorfulness;
mod filters;
mod fsim;
mod loggabor;
mod report;
mod ssim;
mod stsim;

pub use colorfulness::{colorfulness, delta_cf};
pub use fsim::{fsim, FSIM_MIN_SIDE};
pub use report::{
    aggregate, evaluate, image_metrics, table, ColorizationModel, Excluded, IdentityColorizer,
    ImageMetrics, MetricReport, ReportMetadata, Stat, METRIC_NAMES,
};
pub use ssim::{ms_ssim, ms_ssim_scales, ssim_metric, METRIC_WINDOW, MS_SSIM_MIN_SIDE, MS_SSIM_WEIGHTS};
pub use stsim::stsim;
