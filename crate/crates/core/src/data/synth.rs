//! Seeded synthetic corpora and the file-directory corpus.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::pnm::read_image;
use crate::error::{Error, Result};
use crate::group::{pixel_coord, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Shapes,
    Stripes,
    SmoothField,
    FileDir,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub count: usize,
    /// Side length of generated images.
    pub size: usize,
    pub seed: u64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub channels: usize,
    /// Highest frequency index of smooth fields (cycles per image side).
    pub cutoff: usize,
    /// Fade smooth fields to zero outside the inscribed disk.
    pub window: bool,
    /// Source directory for `file-dir`.
    pub dir: Option<PathBuf>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Shapes,
            count: 16,
            size: 96,
            seed: 0,
            scale_min: 2.0,
            scale_max: 4.0,
            channels: 3,
            cutoff: 4,
            window: false,
            dir: None,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("dataset count must be positive".into()));
        }
        if !(self.scale_min >= 1.0
            && self.scale_max >= self.scale_min
            && self.scale_max.is_finite())
        {
            return Err(Error::Config(format!(
                "scale range [{}, {}] must satisfy 1 <= min <= max",
                self.scale_min, self.scale_max
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if self.kind == DatasetKind::FileDir {
            if self.dir.is_none() {
                return Err(Error::Config("file-dir datasets need `dir`".into()));
            }
            return Ok(());
        }
        let step = self.scale_max.ceil() as usize;
        if self.size == 0 || self.size % step != 0 {
            return Err(Error::Config(format!(
                "size {} must be a positive multiple of ceil(scale_max) = {step}",
                self.size
            )));
        }
        if self.kind == DatasetKind::SmoothField && 2 * self.cutoff >= self.size {
            return Err(Error::Config(format!(
                "cutoff {} aliases on a {}-pixel grid",
                self.cutoff, self.size
            )));
        }
        Ok(())
    }

    /// Sorted `.ppm`/`.pgm` files of a `file-dir` corpus.
    pub fn files(&self) -> Result<Vec<PathBuf>> {
        let dir = self
            .dir
            .as_deref()
            .ok_or_else(|| Error::Config("file-dir datasets need `dir`".into()))?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm")))
            .collect();
        files.sort();
        Ok(files)
    }
}

/// Generator stream for one image: the seed picks the key, the index the stream.
pub fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Image `index` of the corpus; a pure function of `(spec, index)`.
pub fn gen_synthetic(spec: &DatasetSpec, index: usize) -> Result<Image> {
    spec.validate()?;
    if index >= spec.count {
        return Err(Error::Config(format!(
            "index {index} outside corpus of {}",
            spec.count
        )));
    }
    let mut rng = image_rng(spec.seed, index);
    let (n, c) = (spec.size, spec.channels);
    Ok(match spec.kind {
        DatasetKind::Shapes => shapes(&mut rng, n, c),
        DatasetKind::Stripes => stripes(&mut rng, n, c),
        DatasetKind::SmoothField => smooth_field(&mut rng, n, c, spec.cutoff, spec.window),
        DatasetKind::FileDir => {
            let files = spec.files()?;
            let path = files.get(index).ok_or_else(|| {
                Error::Config(format!(
                    "index {index} outside directory of {} images",
                    files.len()
                ))
            })?;
            load(path, c)?
        }
    })
}

fn load(path: &Path, c: usize) -> Result<Image> {
    let img = read_image(path)?;
    if img.c != c {
        return Err(Error::shape(format!(
            "{} has {} channels, corpus expects {c}",
            path.display(),
            img.c
        )));
    }
    Ok(img)
}

fn color(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    (0..c).map(|_| rng.gen_range(0.0..1.0)).collect()
}

enum Shape {
    Disk { r: f64 },
    Rect { a: f64, b: f64 },
    Star { r: f64 },
}

fn inside(shape: &Shape, x: f64, y: f64) -> bool {
    match *shape {
        Shape::Disk { r } => x * x + y * y <= r * r,
        Shape::Rect { a, b } => x.abs() <= a && y.abs() <= b,
        Shape::Star { r } => {
            // ten-vertex polygon, even-odd rule
            let verts: Vec<(f64, f64)> = (0..10)
                .map(|k| {
                    let rad = if k % 2 == 0 { r } else { 0.45 * r };
                    let th = PI / 2.0 + k as f64 * PI / 5.0;
                    (rad * th.cos(), rad * th.sin())
                })
                .collect();
            let mut odd = false;
            for k in 0..10 {
                let (x1, y1) = verts[k];
                let (x2, y2) = verts[(k + 1) % 10];
                if (y1 > y) != (y2 > y) && x < x1 + (y - y1) * (x2 - x1) / (y2 - y1) {
                    odd = !odd;
                }
            }
            odd
        }
    }
}

/// Anti-aliased circles, rectangles and stars over a flat background.
fn shapes(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Image {
    let bg = color(rng, c);
    let mut img = Image::from_fn(n, n, c, |_, _, ch| bg[ch]);
    let count = rng.gen_range(3..=6);
    const SS: usize = 4;
    let d = 2.0 / n as f64;
    for _ in 0..count {
        let kind = rng.gen_range(0..3);
        let size = rng.gen_range(0.15..0.45);
        let shape = match kind {
            0 => Shape::Disk { r: size },
            1 => Shape::Rect {
                a: size,
                b: size * rng.gen_range(0.4..1.0),
            },
            _ => Shape::Star { r: size * 1.3 },
        };
        let (cx, cy) = (rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7));
        let th: f64 = rng.gen_range(0.0..2.0 * PI);
        let (cs, sn) = (th.cos(), th.sin());
        let col = color(rng, c);
        for i in 0..n {
            for j in 0..n {
                let [px, py] = pixel_coord(n, n, i, j);
                let mut hits = 0;
                for si in 0..SS {
                    for sj in 0..SS {
                        let x = px + ((sj as f64 + 0.5) / SS as f64 - 0.5) * d - cx;
                        let y = py - ((si as f64 + 0.5) / SS as f64 - 0.5) * d - cy;
                        // shape frame
                        let (u, v) = (cs * x + sn * y, -sn * x + cs * y);
                        if inside(&shape, u, v) {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    let cov = hits as f64 / (SS * SS) as f64;
                    for ch in 0..c {
                        let k = img.idx(i, j, ch);
                        img.data[k] = cov * col[ch] + (1.0 - cov) * img.data[k];
                    }
                }
            }
        }
    }
    img
}

/// A sinusoidal grating between two colors, period 6 to 14 pixels.
fn stripes(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Image {
    let c0 = color(rng, c);
    let c1 = color(rng, c);
    let period = rng.gen_range(6.0..14.0) * 2.0 / n as f64;
    let th: f64 = rng.gen_range(0.0..PI);
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let (dx, dy) = (th.cos(), th.sin());
    Image::from_fn(n, n, c, |i, j, ch| {
        let [x, y] = pixel_coord(n, n, i, j);
        let s = 0.5 + 0.5 * (2.0 * PI * (x * dx + y * dy) / period + phase).sin();
        c0[ch] + (c1[ch] - c0[ch]) * s
    })
}

/// Gaussian random Fourier series with integer frequencies `|k|_∞ <= cutoff`
/// (cycles per image side), min-max normalized to `[0, 1]` per channel.
fn smooth_field(rng: &mut ChaCha8Rng, n: usize, c: usize, cutoff: usize, window: bool) -> Image {
    let k = cutoff as i64;
    let mut modes = Vec::new();
    for ky in 0..=k {
        for kx in -k..=k {
            if ky == 0 && kx <= 0 {
                continue;
            }
            modes.push((kx as f64, ky as f64));
        }
    }
    let mut img = Image::zeros(n, n, c);
    for ch in 0..c {
        let amps: Vec<(f64, f64)> = modes
            .iter()
            .map(|_| (StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect();
        let mut vals = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let [x, y] = pixel_coord(n, n, i, j);
                let v: f64 = modes
                    .iter()
                    .zip(&amps)
                    .map(|(&(kx, ky), &(a, b))| {
                        let arg = PI * (kx * x + ky * y);
                        a * arg.cos() + b * arg.sin()
                    })
                    .sum();
                vals.push(v);
            }
        }
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for (p, v) in vals.into_iter().enumerate() {
            let u = if span > 0.0 { (v - lo) / span } else { 0.5 };
            img.data[p * c + ch] = u;
        }
    }
    if window {
        for i in 0..n {
            for j in 0..n {
                let [x, y] = pixel_coord(n, n, i, j);
                let r = x.hypot(y);
                let w = if r < 1.0 {
                    (0.5 * PI * r).cos().powi(2)
                } else {
                    0.0
                };
                for ch in 0..c {
                    let k = img.idx(i, j, ch);
                    img.data[k] *= w;
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: DatasetKind) -> DatasetSpec {
        DatasetSpec {
            kind,
            count: 3,
            size: 32,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_in_range() {
        for kind in [
            DatasetKind::Shapes,
            DatasetKind::Stripes,
            DatasetKind::SmoothField,
        ] {
            let s = spec(kind);
            for idx in 0..3 {
                let a = gen_synthetic(&s, idx).unwrap();
                assert_eq!(a, gen_synthetic(&s, idx).unwrap());
                assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
            }
            assert_ne!(gen_synthetic(&s, 0).unwrap(), gen_synthetic(&s, 1).unwrap());
        }
    }

    #[test]
    fn index_past_count_rejected() {
        assert!(gen_synthetic(&spec(DatasetKind::Shapes), 3).is_err());
    }

    #[test]
    fn size_must_divide_by_scale() {
        let s = DatasetSpec {
            size: 30,
            scale_max: 4.0,
            ..Default::default()
        };
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }
}
