//! Synthetic partly-registered (MRI, Cryosection, segmentation) triplets.

mod dataset;
mod phantom;
mod resample;

pub use dataset::{
    generate_dataset, load_manifest, load_triplet, read_warp_sidecar, write_triplet,
    write_warp_sidecar, DatasetManifest, SampleFiles, Split, MANIFEST_FILE,
    MANIFEST_FORMAT_VERSION,
};
pub use phantom::{generate_phantom, render_intensity, PhantomSpec, TripletSample};
pub use resample::{downsample, downsample_plane};
