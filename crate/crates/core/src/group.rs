//! Cyclic rotation groups and their action on images and group feature maps.
//!
//! Coordinates are cell-centered on `[-1, 1]^2` with x pointing right and y
//! pointing up: pixel `(i, j)` sits at `(-1 + (j + 0.5) dx, 1 - (i + 0.5) dy)`
//! with `dx = 2 / w` and `dy = 2 / h`.
//!
//! Group element `k` of order `t` is the matrix
//! `A_k = [[cos 2πk/t, sin 2πk/t], [-sin 2πk/t, cos 2πk/t]]`, which in this
//! frame is a clockwise turn by `2πk/t`. [`RotationGroup::angle`] returns the
//! matching counter-clockwise angle (`-2πk/t`) accepted by [`rotate_image`].

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Row-major 2x2 matrix.
pub type Mat2 = [[f64; 2]; 2];

/// Angles closer than this to a multiple of π/2 take the exact permutation path.
pub const RIGHT_ANGLE_TOL: f64 = 1e-12;

pub fn mat_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

pub fn transpose(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// Counter-clockwise rotation by `angle` radians.
pub fn rotation_matrix(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    [[snap(c), -snap(s)], [snap(s), snap(c)]]
}

// cos(π/2) evaluates to 6e-17; snapping keeps quarter turns exact permutations.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-14 {
        r
    } else {
        v
    }
}

/// The cyclic group of `t` planar rotations.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationGroup {
    order: usize,
    mats: Vec<Mat2>,
}

impl RotationGroup {
    pub fn new(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidOrder(t));
        }
        let mats = (0..t)
            .map(|k| {
                let theta = 2.0 * PI * k as f64 / t as f64;
                let (s, c) = theta.sin_cos();
                let (s, c) = (snap(s), snap(c));
                [[c, s], [-s, c]]
            })
            .collect();
        Ok(Self { order: t, mats })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `A_k`.
    pub fn matrix(&self, k: usize) -> &Mat2 {
        &self.mats[k % self.order]
    }

    /// `A_k^{-1}`, i.e. the transpose of `A_k`.
    pub fn inverse_matrix(&self, k: usize) -> Mat2 {
        transpose(self.matrix(k))
    }

    /// Index of `A_k A_j`.
    pub fn compose(&self, k: usize, j: usize) -> usize {
        (k + j) % self.order
    }

    /// Index of `A_k^{-1}`.
    pub fn inverse(&self, k: usize) -> usize {
        (self.order - k % self.order) % self.order
    }

    /// Counter-clockwise angle of element `k` in the image frame.
    pub fn angle(&self, k: usize) -> f64 {
        -2.0 * PI * (k % self.order) as f64 / self.order as f64
    }

    /// Whether every element is a multiple of a quarter turn.
    pub fn is_right_angled(&self) -> bool {
        4 % self.order == 0
    }

    pub fn check_index(&self, k: usize) -> Result<()> {
        if k >= self.order {
            return Err(Error::GroupIndex {
                index: k,
                order: self.order,
            });
        }
        Ok(())
    }
}

/// An `h x w x c` raster of 64-bit samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_vec(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::shape(format!(
                "image {h}x{w}x{c} needs {} samples, got {}",
                h * w * c,
                data.len()
            )));
        }
        Ok(Self { h, w, c, data })
    }

    pub fn from_fn(
        h: usize,
        w: usize,
        c: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(h * w * c);
        for i in 0..h {
            for j in 0..w {
                for ch in 0..c {
                    data.push(f(i, j, ch));
                }
            }
        }
        Self { h, w, c, data }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, ch: usize) -> usize {
        (i * self.w + j) * self.c + ch
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, ch: usize) -> f64 {
        self.data[self.idx(i, j, ch)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, ch: usize, v: f64) {
        let k = self.idx(i, j, ch);
        self.data[k] = v;
    }

    pub fn mesh_x(&self) -> f64 {
        2.0 / self.w as f64
    }

    pub fn mesh_y(&self) -> f64 {
        2.0 / self.h as f64
    }

    /// Mesh size δ (square images).
    pub fn mesh(&self) -> f64 {
        self.mesh_y()
    }

    pub fn coord(&self, i: usize, j: usize) -> [f64; 2] {
        pixel_coord(self.h, self.w, i, j)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channel-first copy, `[c][h][w]`.
    pub fn to_chw(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        let hw = self.h * self.w;
        for p in 0..hw {
            for ch in 0..self.c {
                out[ch * hw + p] = self.data[p * self.c + ch];
            }
        }
        out
    }

    pub fn from_chw(h: usize, w: usize, c: usize, chw: &[f64]) -> Result<Self> {
        if chw.len() != h * w * c {
            return Err(Error::shape("channel-first buffer has the wrong length"));
        }
        let hw = h * w;
        let mut data = vec![0.0; chw.len()];
        for p in 0..hw {
            for ch in 0..c {
                data[p * c + ch] = chw[ch * hw + p];
            }
        }
        Ok(Self { h, w, c, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }
}

pub fn pixel_coord(h: usize, w: usize, i: usize, j: usize) -> [f64; 2] {
    let dx = 2.0 / w as f64;
    let dy = 2.0 / h as f64;
    [-1.0 + (j as f64 + 0.5) * dx, 1.0 - (i as f64 + 0.5) * dy]
}

/// Per-pixel mask of centers inside the inscribed disk `|x| <= 1 - δ/2`.
///
/// Bilinear resampling reproduces affine fields exactly inside this disk
/// under any rotation, since every source point stays within the hull of
/// pixel centers.
pub fn inscribed_disk_mask(h: usize, w: usize) -> Vec<bool> {
    let radius = 1.0 - 0.5 * (2.0 / h.max(w) as f64);
    let mut mask = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let [x, y] = pixel_coord(h, w, i, j);
            mask.push(x.hypot(y) <= radius + 1e-12);
        }
    }
    mask
}

/// Number of counter-clockwise quarter turns if `angle` is a right-angle multiple.
pub fn quarter_turns(angle: f64) -> Option<usize> {
    let q = (angle / FRAC_PI_2).round();
    if (angle - q * FRAC_PI_2).abs() < RIGHT_ANGLE_TOL {
        Some(q.rem_euclid(4.0) as usize)
    } else {
        None
    }
}

/// Rotates `img` counter-clockwise by `angle` radians about the image center.
///
/// The output at coordinate `x` holds the input at `R(angle)^{-1} x`. Quarter
/// turns permute pixels exactly; other angles interpolate bilinearly and
/// fill samples from outside `[-1, 1]^2` with zero.
pub fn rotate_image(img: &Image, angle: f64) -> Result<Image> {
    match quarter_turns(angle) {
        Some(q) => rotate_quarter(img, q),
        None => Ok(rotate_bilinear(img, angle)),
    }
}

fn rotate_quarter(img: &Image, q: usize) -> Result<Image> {
    if q == 0 {
        return Ok(img.clone());
    }
    if q % 2 == 1 && img.h != img.w {
        return Err(Error::shape(format!(
            "exact quarter-turn rotation needs a square image, got {}x{}",
            img.h, img.w
        )));
    }
    let (h, w, c) = (img.h as i64, img.w as i64, img.c);
    let mut out = Image::zeros(img.h, img.w, c);
    for i in 0..h {
        for j in 0..w {
            // doubled centered coordinates keep the index chase in integers
            let x = 2 * j + 1 - w;
            let y = h - 1 - 2 * i;
            let (sx, sy) = match q {
                1 => (y, -x),
                2 => (-x, -y),
                _ => (-y, x),
            };
            let sj = ((sx + w - 1) / 2) as usize;
            let si = ((h - 1 - sy) / 2) as usize;
            let src = img.idx(si, sj, 0);
            let dst = out.idx(i as usize, j as usize, 0);
            out.data[dst..dst + c].copy_from_slice(&img.data[src..src + c]);
        }
    }
    Ok(out)
}

fn rotate_bilinear(img: &Image, angle: f64) -> Image {
    let inv = transpose(&rotation_matrix(angle));
    let (h, w, c) = (img.h, img.w, img.c);
    let (dx, dy) = (img.mesh_x(), img.mesh_y());
    let mut out = Image::zeros(h, w, c);
    for i in 0..h {
        for j in 0..w {
            let src = mat_vec(&inv, pixel_coord(h, w, i, j));
            let jf = (src[0] + 1.0) / dx - 0.5;
            let iff = (1.0 - src[1]) / dy - 0.5;
            let lim = 1e-9;
            if jf < -0.5 - lim
                || jf > w as f64 - 0.5 + lim
                || iff < -0.5 - lim
                || iff > h as f64 - 0.5 + lim
            {
                continue;
            }
            let j0 = jf.floor();
            let i0 = iff.floor();
            let fj = jf - j0;
            let fi = iff - i0;
            let clamp_j = |v: f64| v.clamp(0.0, (w - 1) as f64) as usize;
            let clamp_i = |v: f64| v.clamp(0.0, (h - 1) as f64) as usize;
            let (ja, jb) = (clamp_j(j0), clamp_j(j0 + 1.0));
            let (ia, ib) = (clamp_i(i0), clamp_i(i0 + 1.0));
            for ch in 0..c {
                let top = (1.0 - fj) * img.get(ia, ja, ch) + fj * img.get(ia, jb, ch);
                let bot = (1.0 - fj) * img.get(ib, ja, ch) + fj * img.get(ib, jb, ch);
                out.set(i, j, ch, (1.0 - fi) * top + fi * bot);
            }
        }
    }
    out
}

/// An `h x w x n x t` feature tensor whose last axis is indexed by group elements.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFeatureMap {
    pub h: usize,
    pub w: usize,
    pub n: usize,
    pub t: usize,
    pub data: Vec<f64>,
}

impl GroupFeatureMap {
    pub fn zeros(h: usize, w: usize, n: usize, t: usize) -> Self {
        Self {
            h,
            w,
            n,
            t,
            data: vec![0.0; h * w * n * t],
        }
    }

    pub fn from_vec(h: usize, w: usize, n: usize, t: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * n * t {
            return Err(Error::shape(format!(
                "feature map {h}x{w}x{n}x{t} needs {} values, got {}",
                h * w * n * t,
                data.len()
            )));
        }
        Ok(Self { h, w, n, t, data })
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, c: usize, k: usize) -> usize {
        ((i * self.w + j) * self.n + c) * self.t + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, c: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, c, k)]
    }

    /// The `n`-channel image `F^{A_k}`.
    pub fn slot(&self, k: usize) -> Image {
        Image::from_fn(self.h, self.w, self.n, |i, j, c| self.get(i, j, c, k))
    }

    pub fn set_slot(&mut self, k: usize, img: &Image) {
        for i in 0..self.h {
            for j in 0..self.w {
                for c in 0..self.n {
                    let d = self.idx(i, j, c, k);
                    self.data[d] = img.get(i, j, c);
                }
            }
        }
    }

    /// The latent code `F_ij` as an `n x t` matrix flattened as `c * t + k`.
    pub fn pixel(&self, i: usize, j: usize) -> &[f64] {
        let start = self.idx(i, j, 0, 0);
        &self.data[start..start + self.n * self.t]
    }

    /// Channel-first layout `[n * t][h][w]` with channel index `c * t + k`.
    pub fn to_chw(&self) -> Vec<f64> {
        let channels = self.n * self.t;
        let hw = self.h * self.w;
        let mut out = vec![0.0; self.data.len()];
        for p in 0..hw {
            for ch in 0..channels {
                out[ch * hw + p] = self.data[p * channels + ch];
            }
        }
        out
    }

    pub fn from_chw(h: usize, w: usize, n: usize, t: usize, chw: &[f64]) -> Result<Self> {
        let img = Image::from_chw(h, w, n * t, chw)?;
        Self::from_vec(h, w, n, t, img.data)
    }
}

/// Applies group element `k` to a feature map: spatial rotation by `A_k`
/// combined with the cyclic shift that moves slot `j - k` into slot `j`.
pub fn rotate_feature(
    f: &GroupFeatureMap,
    group: &RotationGroup,
    k: usize,
) -> Result<GroupFeatureMap> {
    if f.t != group.order() {
        return Err(Error::GroupMismatch {
            expected: group.order(),
            actual: f.t,
        });
    }
    group.check_index(k)?;
    let t = f.t;
    let angle = group.angle(k);
    let mut out = GroupFeatureMap::zeros(f.h, f.w, f.n, t);
    for j in 0..t {
        let src = (j + t - k) % t;
        let rotated = rotate_image(&f.slot(src), angle)?;
        out.set_slot(j, &rotated);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat2, b: &Mat2, tol: f64) -> bool {
        (0..2).all(|i| (0..2).all(|j| (a[i][j] - b[i][j]).abs() <= tol))
    }

    #[test]
    fn p4_generator_matches_closed_form() {
        let g = RotationGroup::new(4).unwrap();
        assert_eq!(g.matrix(1), &[[0.0, 1.0], [-1.0, 0.0]]);
        assert_eq!(g.matrix(0), &[[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn trivial_group_is_identity() {
        let g = RotationGroup::new(1).unwrap();
        assert_eq!(g.order(), 1);
        assert_eq!(g.matrix(0), &[[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn p8_entries_are_half_root_two() {
        let g = RotationGroup::new(8).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(g.matrix(1), &[[r, r], [-r, r]], 1e-12));
    }

    #[test]
    fn zero_order_rejected() {
        assert!(matches!(RotationGroup::new(0), Err(Error::InvalidOrder(0))));
    }

    #[test]
    fn index_arithmetic_matches_matrices() {
        for t in [1, 2, 3, 4, 8, 16] {
            let g = RotationGroup::new(t).unwrap();
            for k in 0..t {
                let a = g.matrix(k);
                let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                assert!((det - 1.0).abs() <= 1e-12);
                let ata = mat_mul(&transpose(a), a);
                assert!(close(&ata, &[[1.0, 0.0], [0.0, 1.0]], 1e-12));
                assert!(close(g.matrix(g.inverse(k)), &g.inverse_matrix(k), 1e-12));
                for j in 0..t {
                    let prod = mat_mul(g.matrix(k), g.matrix(j));
                    assert!(close(g.matrix(g.compose(k, j)), &prod, 1e-12));
                }
            }
        }
    }

    #[test]
    fn element_angle_agrees_with_matrix() {
        let g = RotationGroup::new(8).unwrap();
        for k in 0..8 {
            assert!(close(&rotation_matrix(g.angle(k)), g.matrix(k), 1e-12));
        }
    }

    #[test]
    fn quarter_turn_of_two_by_two() {
        let img = Image::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = rotate_image(&img, FRAC_PI_2).unwrap();
        // [[a,b],[c,d]] -> [[b,d],[a,c]]
        assert_eq!(r.data, vec![2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn four_quarter_turns_restore_image() {
        let img = Image::from_fn(5, 5, 2, |i, j, c| (i * 31 + j * 7 + c) as f64 * 0.37);
        let mut r = img.clone();
        for _ in 0..4 {
            r = rotate_image(&r, FRAC_PI_2).unwrap();
        }
        assert_eq!(r, img);
    }

    #[test]
    fn zero_angle_is_bit_identity() {
        let img = Image::from_fn(4, 6, 1, |i, j, _| (i as f64).sin() + j as f64);
        assert_eq!(rotate_image(&img, 0.0).unwrap(), img);
    }

    #[test]
    fn odd_quarter_turn_needs_square() {
        let img = Image::zeros(3, 4, 1);
        assert!(matches!(
            rotate_image(&img, FRAC_PI_2),
            Err(Error::Shape(_))
        ));
        assert!(rotate_image(&img, PI).is_ok());
    }

    #[test]
    fn constant_field_survives_thirty_degrees_in_disk() {
        let img = Image::from_fn(16, 16, 1, |_, _, _| 0.625);
        let r = rotate_image(&img, PI / 6.0).unwrap();
        let mask = inscribed_disk_mask(16, 16);
        for (p, &m) in mask.iter().enumerate() {
            if m {
                assert!((r.data[p] - 0.625).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn right_angle_rotation_preserves_constant_exactly() {
        let img = Image::from_fn(6, 6, 3, |_, _, _| 0.3);
        for q in 1..4 {
            let r = rotate_image(&img, q as f64 * FRAC_PI_2).unwrap();
            assert_eq!(r, img);
        }
    }

    #[test]
    fn trivial_group_feature_rotation_is_image_rotation() {
        let g = RotationGroup::new(1).unwrap();
        let f = GroupFeatureMap::from_vec(4, 4, 2, 1, (0..32).map(|v| v as f64).collect()).unwrap();
        let r = rotate_feature(&f, &g, 0).unwrap();
        assert_eq!(r, f);
    }

    #[test]
    fn impulse_moves_to_rotated_pixel_and_next_slot() {
        let g = RotationGroup::new(4).unwrap();
        let mut f = GroupFeatureMap::zeros(4, 4, 1, 4);
        // pixel (0, 1) of slot 0
        let idx = f.idx(0, 1, 0, 0);
        f.data[idx] = 1.0;
        let r = rotate_feature(&f, &g, 1).unwrap();
        // A_1 is a clockwise quarter turn: (x, y) -> (y, -x).
        let [x, y] = pixel_coord(4, 4, 0, 1);
        let (tx, ty) = (y, -x);
        let mut hits = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    if r.get(i, j, 0, k) != 0.0 {
                        hits.push((i, j, k));
                    }
                }
            }
        }
        assert_eq!(hits.len(), 1);
        let (i, j, k) = hits[0];
        assert_eq!(k, 1);
        let c = pixel_coord(4, 4, i, j);
        assert!((c[0] - tx).abs() < 1e-12 && (c[1] - ty).abs() < 1e-12);
        assert_eq!(r.get(i, j, 0, k), 1.0);
    }

    #[test]
    fn feature_rotation_rejects_bad_index_and_order() {
        let g = RotationGroup::new(4).unwrap();
        let f = GroupFeatureMap::zeros(2, 2, 1, 4);
        assert!(matches!(
            rotate_feature(&f, &g, 4),
            Err(Error::GroupIndex { .. })
        ));
        let f8 = GroupFeatureMap::zeros(2, 2, 1, 8);
        assert!(matches!(
            rotate_feature(&f8, &g, 1),
            Err(Error::GroupMismatch { .. })
        ));
    }

    #[test]
    fn chw_round_trip() {
        let f = GroupFeatureMap::from_vec(2, 3, 2, 4, (0..48).map(|v| v as f64).collect()).unwrap();
        let back = GroupFeatureMap::from_chw(2, 3, 2, 4, &f.to_chw()).unwrap();
        assert_eq!(back, f);
    }
}
