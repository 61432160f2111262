//! Image files, bicubic degradation, synthetic corpora and training pairs.

mod patches;
mod pnm;
mod resize;
mod synth;

pub use patches::{sample_patch_pairs, PatchPair};
pub use pnm::{decode, encode, quantize, read_image, write_atomic, write_image};
pub use resize::bicubic_resize;
pub use synth::{gen_synthetic, image_rng, DatasetKind, DatasetSpec};
