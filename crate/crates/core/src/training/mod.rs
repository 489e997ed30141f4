//! Optimization: configuration, Adam, the cyclic training loop, segmenter pretraining,
//! inference from checkpoints and the ablation suite.

mod ablation;
mod adam;
mod batch;
mod config;
mod infer;
mod pretrain;
mod trainer;

pub use ablation::{run_ablation_suite, AblationOptions, AblationRow, AblationSuite};
pub use adam::Adam;
pub use batch::TrainBatch;
pub use config::{
    apply_overrides, AblationFlags, AdamConfig, DataConfig, Precision, PretrainConfig, TrainConfig, Variant,
    CONFIG_VERSION,
};
pub use infer::Colorizer;
pub use pretrain::{
    load_segmenter_weights, pixel_accuracy, pretrain_segmenter, segmenter_fingerprint, PretrainEpoch,
    PretrainOptions, PretrainOutcome, SEGMENTER_CHECKPOINT,
};
pub use trainer::{
    read_log, train, CycleModels, LogRecord, Progress, TrainOptions, TrainOutcome, Trainer, CONFIG_FILE,
    FINAL_CHECKPOINT, LAST_CHECKPOINT, LOG_FILE,
};
