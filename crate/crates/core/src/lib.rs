//! Structure-preserving colorization of grayscale MRI slices into cryosection-like
//! RGB images.
//!
//! A dual-decoder cycle-consistent GAN maps MRI to color and back. One decoder emits
//! the color image, the other a pseudo-MRI; SSIM ties each output to its input's
//! structure and a frozen U-Net segmenter enforces anatomical class agreement.
//!
//! - [`data`]: procedural phantom triplets (MRI, cryosection, labels) and datasets
//! - [`nn`]: generators, discriminators, the U-Net and checkpoint archives
//! - [`losses`]: SSIM, segmentation, reconstruction and adversarial terms
//! - [`training`]: segmenter pretraining, cyclic training, inference and ablations
//! - [`metrics`]: CF, ΔCF, SSIM, MS-SSIM, STSIM and FSIM with report aggregation
//! - [`grid`]: ground truth / input / output comparison figures
//! - [`cli`]: the `cryocolor` command line

pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod grid;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod training;
