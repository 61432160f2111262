//! Random LR/HR training pairs with sampled query pixels.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::resize::bicubic_resize;
use super::synth::{gen_synthetic, DatasetSpec};
use crate::error::{Error, Result};
use crate::group::{pixel_coord, Image};

#[derive(Debug, Clone, PartialEq)]
pub struct PatchPair {
    pub scale: f64,
    pub lr: Image,
    pub hr: Image,
    /// HR cell centers in the shared `[-1, 1]^2` frame of both patches.
    pub coords: Vec<[f64; 2]>,
    /// Ground truth at `coords`, `c` values per query.
    pub targets: Vec<f64>,
}

/// Draws `batch` pairs: scale `s ~ U[scale_min, scale_max]`, an HR crop of
/// `round(patch * s)` pixels, its bicubic reduction to `patch` pixels and
/// `patch²` distinct HR query pixels.
pub fn sample_patch_pairs(
    spec: &DatasetSpec,
    patch: usize,
    batch: usize,
    seed: u64,
) -> Result<Vec<PatchPair>> {
    spec.validate()?;
    if patch == 0 {
        return Err(Error::Config("patch size must be positive".into()));
    }
    let largest = (patch as f64 * spec.scale_max).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let index = rng.gen_range(0..spec.count);
        let img = gen_synthetic(spec, index)?;
        if largest > img.h || largest > img.w {
            return Err(Error::Config(format!(
                "patch {patch} at scale {} needs {largest} pixels, image is {}x{}",
                spec.scale_max, img.h, img.w
            )));
        }
        let s = if spec.scale_max > spec.scale_min {
            rng.gen_range(spec.scale_min..spec.scale_max)
        } else {
            spec.scale_min
        };
        let size = ((patch as f64 * s).round() as usize).max(patch);
        let i0 = rng.gen_range(0..=img.h - size);
        let j0 = rng.gen_range(0..=img.w - size);
        let hr = Image::from_fn(size, size, img.c, |i, j, c| img.get(i0 + i, j0 + j, c));
        let lr = bicubic_resize(&hr, patch, patch);
        let picks = sample(&mut rng, size * size, patch * patch).into_vec();
        let mut coords = Vec::with_capacity(picks.len());
        let mut targets = Vec::with_capacity(picks.len() * img.c);
        for p in picks {
            let (i, j) = (p / size, p % size);
            coords.push(pixel_coord(size, size, i, j));
            targets.extend((0..img.c).map(|c| hr.get(i, j, c)));
        }
        out.push(PatchPair {
            scale: s,
            lr,
            hr,
            coords,
            targets,
        });
    }
    Ok(out)
}
