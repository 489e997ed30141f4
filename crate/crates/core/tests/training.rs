use std::path::{Path, PathBuf};

use cryocolor::data::{generate_dataset, load_manifest, DatasetManifest, PhantomSpec, Split};
use cryocolor::metrics::{evaluate, ColorizationModel};
use cryocolor::nn::GeneratorConfig;
use cryocolor::training::{
    pretrain_segmenter, run_ablation_suite, train, AblationOptions, Colorizer, PretrainOptions, TrainConfig,
    TrainOptions, Variant, FINAL_CHECKPOINT, LAST_CHECKPOINT,
};

fn tiny_cfg() -> TrainConfig {
    let mut cfg = TrainConfig::desk(3);
    cfg.image_size = 32;
    cfg.batch_size = 2;
    cfg.epochs = 2;
    cfg.generator = GeneratorConfig {
        base_channels: 8,
        depth: 2,
        num_residual_blocks: 1,
        ..cfg.generator
    };
    cfg.discriminator.base_channels = 4;
    cfg.segmenter.depth = 2;
    cfg.segmenter.base_channels = 4;
    cfg.pretrain.epochs = 1;
    cfg
}

fn setup(root: &Path) -> (DatasetManifest, TrainConfig, PathBuf) {
    let manifest = generate_dataset(&PhantomSpec::new(32, 3, 5), 6, 2, &root.join("data")).unwrap();
    let cfg = tiny_cfg();
    let seg = pretrain_segmenter(&manifest, &cfg, &root.join("seg"), &PretrainOptions::default()).unwrap();
    (manifest, cfg, seg.checkpoint)
}

fn opts(seg: &Path, max_steps: Option<u64>, resume: Option<PathBuf>) -> TrainOptions {
    TrainOptions {
        max_steps,
        resume,
        segmenter: Some(seg.to_path_buf()),
    }
}

#[test]
fn dataset_generation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PhantomSpec::new(32, 3, 9);
    let a = generate_dataset(&spec, 3, 2, &dir.path().join("a")).unwrap();
    let b = generate_dataset(&spec, 3, 2, &dir.path().join("b")).unwrap();
    assert_eq!(a.checksum, b.checksum);
    let loaded = load_manifest(&dir.path().join("a")).unwrap();
    assert_eq!(loaded.checksum, a.checksum);
    let other = generate_dataset(&PhantomSpec::new(32, 3, 10), 3, 2, &dir.path().join("c")).unwrap();
    assert_ne!(other.checksum, a.checksum);
}

#[test]
fn completed_run_writes_final_checkpoint_and_resume_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, cfg, seg) = setup(dir.path());
    let run = dir.path().join("run");
    let outcome = train(&manifest, &cfg, &run, &opts(&seg, None, None)).unwrap();
    assert!(outcome.completed);
    assert_eq!(outcome.steps, 6);
    assert_eq!(outcome.final_checkpoint.as_deref(), Some(run.join(FINAL_CHECKPOINT).as_path()));
    assert!(run.join(LAST_CHECKPOINT).exists());

    let log = std::fs::read(&outcome.log_path).unwrap();
    let again = train(&manifest, &cfg, &run, &opts(&seg, None, Some(run.join(LAST_CHECKPOINT)))).unwrap();
    assert!(again.completed);
    assert!(again.records.is_empty());
    assert_eq!(std::fs::read(&again.log_path).unwrap(), log);
}

#[test]
fn resume_across_an_epoch_boundary_matches_one_pass() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, cfg, seg) = setup(dir.path());
    let whole = train(&manifest, &cfg, &dir.path().join("whole"), &opts(&seg, None, None)).unwrap();
    let split = dir.path().join("split");
    let first = train(&manifest, &cfg, &split, &opts(&seg, Some(4), None)).unwrap();
    assert!(!first.completed);
    let rest = train(&manifest, &cfg, &split, &opts(&seg, None, Some(first.last_checkpoint))).unwrap();
    assert!(rest.completed);
    assert_eq!(std::fs::read(whole.log_path).unwrap(), std::fs::read(rest.log_path).unwrap());

    let a = Colorizer::load(&whole.final_checkpoint.unwrap()).unwrap();
    let b = Colorizer::load(&rest.final_checkpoint.unwrap()).unwrap();
    let m = cryocolor::data::load_triplet(&manifest, Split::Test, 0).unwrap().m;
    assert_eq!(a.colorize(&m).unwrap(), b.colorize(&m).unwrap());
}

#[test]
fn mismatched_image_size_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, mut cfg, seg) = setup(dir.path());
    cfg.image_size = 64;
    assert!(train(&manifest, &cfg, &dir.path().join("run"), &opts(&seg, Some(1), None)).is_err());
}

#[test]
fn evaluation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, cfg, seg) = setup(dir.path());
    let outcome = train(&manifest, &cfg, &dir.path().join("run"), &opts(&seg, Some(2), None)).unwrap();
    let model = Colorizer::load(&outcome.last_checkpoint).unwrap();
    let a = evaluate(&model, &manifest, Split::Test, 2).unwrap();
    let b = evaluate(&model, &manifest, Split::Test, 1).unwrap();
    assert_eq!(a.per_image, b.per_image);
    assert!(model.id().ends_with("@step2"));
}

#[test]
fn ablation_rows_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, cfg, seg) = setup(dir.path());
    let out = dir.path().join("ablation");
    let suite = run_ablation_suite(
        &manifest,
        &cfg,
        &out,
        &AblationOptions {
            segmenter: Some(seg),
            variants: vec![Variant::Full, Variant::A3, Variant::A5],
            max_steps: Some(1),
            eval_batch_size: 2,
        },
    )
    .unwrap();
    assert_eq!(suite.rows.len(), 3);
    assert!(suite.rows.iter().all(|r| r.report.is_some() && r.dataset_checksum == manifest.checksum));
    assert!(suite.mean(Variant::A3, "ssim").is_some());
    assert!(suite.mean(Variant::A1, "ssim").is_none());
    let table = std::fs::read_to_string(out.join("ablation.txt")).unwrap();
    assert!(table.contains("A5: -comp. activation"));
    assert!(out.join("a3").join(FINAL_CHECKPOINT).exists() || out.join("a3").join(LAST_CHECKPOINT).exists());
}
