//! Training objectives.

mod adversarial;
mod objective;
mod reconstruction;
mod segmentation;
pub mod ssim;

pub use adversarial::{adversarial_losses, discriminator_term, generator_term, AdversarialLosses, ADV_EPS};
pub use objective::{total_objective, LossBundle, LossTerms, LossWeights};
pub use reconstruction::reconstruction_loss;
pub use segmentation::{segmentation_ce, segmentation_loss, CE_EPS};
pub use ssim::{
    local_ssim_map, ssim_pair_loss, ssim_pair_loss_per_channel, total_ssim_loss, SsimComponents,
    SsimConstants, PATCH_SIZES,
};
