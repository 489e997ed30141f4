//! Network definitions: generators, discriminators, the U-Net segmenter and checkpoints.

pub mod checkpoint;
mod discriminator;
mod generator;
pub mod layers;
mod multiscale;
pub mod params;
mod unet;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{
    ColorizationGenerator, GeneratorConfig, GeneratorOutput, InterDecoderDirection, ReverseGenerator,
};
pub use layers::{SeBlock, SeBlockConfig};
pub use multiscale::MultiscaleFuse;
pub use params::{ParamBuilder, ParamStore};
pub use unet::{UNet, UNetConfig};
