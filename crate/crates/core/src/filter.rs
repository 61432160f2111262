//! Bicubic filter parametrization and the two equivariant convolution types.
//!
//! A filter of odd size `p` is stored as a `p x p` grid of coefficients
//! `w_k`. Its continuous form is `φ(x) = Σ_k w_k φ_Bic(x_1 - a_k) φ_Bic(x_2 - b_k)`
//! in filter units (grid spacing 1), where `(a_k, b_k)` is the node of
//! coefficient `k`. A rotated discrete kernel samples `φ(A^{-1} u)` at the
//! grid nodes `u`. The sampling is linear in the coefficients, so each group
//! element gets a fixed `p² x p²` resampling matrix, computed once per
//! `(p, t)` and shared.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::autodiff::{Padding, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::group::{mat_mul, mat_vec, transpose, GroupFeatureMap, Image, Mat2, RotationGroup};

/// The Keys cubic convolution kernel (a = -0.5).
pub fn phi_bic(y: f64) -> f64 {
    let a = y.abs();
    if a <= 1.0 {
        1.5 * a * a * a - 2.5 * a * a + 1.0
    } else if a <= 2.0 {
        -0.5 * a * a * a + 2.5 * a * a - 4.0 * a + 2.0
    } else {
        0.0
    }
}

/// A family of `p²` continuous basis functions attached to the nodes of a
/// `p x p` grid.
pub trait FilterBasis {
    fn size(&self) -> usize;

    /// Basis function of coefficient `node` (row-major) evaluated at `x`.
    fn eval(&self, node: usize, x: [f64; 2]) -> f64;
}

/// Tensor products of [`phi_bic`] centered on the grid nodes.
#[derive(Debug, Clone, Copy)]
pub struct BicubicBasis {
    p: usize,
}

impl BicubicBasis {
    pub fn new(p: usize) -> Result<Self> {
        if p == 0 || p % 2 == 0 {
            return Err(Error::Config(format!("filter size must be odd, got {p}")));
        }
        Ok(Self { p })
    }
}

/// Coordinates of grid node `idx` in filter units: x right, y up, origin at
/// the center.
pub fn node_coord(p: usize, idx: usize) -> [f64; 2] {
    let c = (p / 2) as f64;
    let (r, s) = (idx / p, idx % p);
    [s as f64 - c, c - r as f64]
}

impl FilterBasis for BicubicBasis {
    fn size(&self) -> usize {
        self.p
    }

    fn eval(&self, node: usize, x: [f64; 2]) -> f64 {
        let [a, b] = node_coord(self.p, node);
        phi_bic(x[0] - a) * phi_bic(x[1] - b)
    }
}

/// Row-major `p² x p²` matrix `R` with `R[u][k] = φ_k(A^{-1} u)`.
pub fn resampling_matrix(basis: &dyn FilterBasis, a: &Mat2) -> Vec<f64> {
    let p = basis.size();
    let n = p * p;
    let inv = transpose(a);
    let mut m = vec![0.0; n * n];
    for u in 0..n {
        let src = mat_vec(&inv, node_coord(p, u));
        for k in 0..n {
            m[u * n + k] = basis.eval(k, src);
        }
    }
    m
}

fn check_orthogonal(a: &Mat2) -> Result<()> {
    let ata = mat_mul(&transpose(a), a);
    let err = (ata[0][0] - 1.0).abs() + (ata[1][1] - 1.0).abs() + ata[0][1].abs() + ata[1][0].abs();
    if err > 1e-9 || !err.is_finite() {
        return Err(Error::Matrix(format!(
            "rotation matrix {a:?} is not orthogonal"
        )));
    }
    Ok(())
}

/// Coefficient grids `[c_out, g_in, c_in, p, p]` of a parametrized filter bank.
///
/// `g_in` is 1 for lifting filters and the group order for group filters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamFilter {
    pub c_out: usize,
    pub g_in: usize,
    pub c_in: usize,
    pub p: usize,
    pub coeffs: Vec<f64>,
}

impl ParamFilter {
    pub fn new(c_out: usize, g_in: usize, c_in: usize, p: usize, coeffs: Vec<f64>) -> Result<Self> {
        BicubicBasis::new(p)?;
        if coeffs.len() != c_out * g_in * c_in * p * p {
            return Err(Error::shape(format!(
                "filter [{c_out}, {g_in}, {c_in}, {p}, {p}] needs {} coefficients, got {}",
                c_out * g_in * c_in * p * p,
                coeffs.len()
            )));
        }
        Ok(Self {
            c_out,
            g_in,
            c_in,
            p,
            coeffs,
        })
    }

    pub fn shape(&self) -> [usize; 5] {
        [self.c_out, self.g_in, self.c_in, self.p, self.p]
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(self.shape().to_vec(), self.coeffs.clone()).expect("validated")
    }
}

/// Samples the continuous filters rotated by `a` on the `p x p` grid.
pub fn synthesize_kernel(f: &ParamFilter, a: &Mat2) -> Result<Tensor> {
    check_orthogonal(a)?;
    let basis = BicubicBasis::new(f.p)?;
    let n = f.p * f.p;
    let r = resampling_matrix(&basis, a);
    let mut out = vec![0.0; f.coeffs.len()];
    for (src, dst) in f.coeffs.chunks(n).zip(out.chunks_mut(n)) {
        for u in 0..n {
            dst[u] = r[u * n..(u + 1) * n]
                .iter()
                .zip(src)
                .map(|(x, y)| x * y)
                .sum();
        }
    }
    Tensor::new(f.shape().to_vec(), out)
}

/// Transposed resampling matrices for every element of a group, laid side
/// by side as one `[p², t * p²]` block so a single matmul rotates a whole
/// coefficient bank.
#[derive(Debug)]
pub struct RotatedBasis {
    p: usize,
    t: usize,
    masked: bool,
    stacked: Tensor,
}

impl RotatedBasis {
    /// For groups with non-right-angle elements only the basis functions
    /// centered on the inner `(p - 2) x (p - 2)` nodes are used, so the
    /// continuous filter vanishes beyond `(p + 1) / 2` cells along each axis
    /// and its rotated copies stay inside the sampled support.
    pub fn new(p: usize, group: &RotationGroup) -> Result<Self> {
        let basis = BicubicBasis::new(p)?;
        let t = group.order();
        let n = p * p;
        let masked = !group.is_right_angled();
        let reach = (p as f64 - 3.0).max(0.0) / 2.0;
        let used: Vec<bool> = (0..n)
            .map(|k| {
                let [x, y] = node_coord(p, k);
                !masked || x.abs().max(y.abs()) <= reach
            })
            .collect();
        let mut stacked = vec![0.0; n * t * n];
        for a in 0..t {
            let r = resampling_matrix(&basis, group.matrix(a));
            for u in 0..n {
                for k in (0..n).filter(|&k| used[k]) {
                    stacked[k * t * n + a * n + u] = r[u * n + k];
                }
            }
        }
        Ok(Self {
            p,
            t,
            masked,
            stacked: Tensor::new(vec![n, t * n], stacked)?,
        })
    }

    /// Shared instance for `(p, t)`.
    pub fn cached(p: usize, group: &RotationGroup) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<RotatedBasis>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let key = (p, group.order());
        if let Some(hit) = cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let built = Arc::new(Self::new(p, group)?);
        cache.lock().expect("cache lock").insert(key, built.clone());
        Ok(built)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn order(&self) -> usize {
        self.t
    }

    /// Whether the coefficient support is restricted to the inner nodes.
    pub fn is_masked(&self) -> bool {
        self.masked
    }
}

/// Builds the full convolution kernel for a lifting (`g_in == 1`) or group
/// (`g_in == t`) filter bank held in `coeffs` (`[c_out, g_in, c_in, p, p]`).
///
/// The result has shape `[c_out * t, c_in * t_in, p, p]` with output channel
/// `o * t + a` and input channel `c * t_in + b`, where `t_in` is 1 for
/// lifting and `t` for group filters. Output slot `a` sees the coefficients
/// of group index `(b - a) mod t` rotated by `A_a`.
pub fn assemble_kernel(tape: &mut Tape, coeffs: Var, bank: &RotatedBasis) -> Result<Var> {
    let shape = tape.value(coeffs).shape().to_vec();
    let [c_out, g_in, c_in, p, p2] = shape[..] else {
        return Err(Error::shape(format!(
            "filter coefficients must be rank 5, got {shape:?}"
        )));
    };
    let t = bank.t;
    if p != bank.p || p2 != p {
        return Err(Error::shape(format!(
            "filter size {p} does not match basis size {}",
            bank.p
        )));
    }
    if g_in != 1 && g_in != t {
        return Err(Error::GroupMismatch {
            expected: t,
            actual: g_in,
        });
    }
    let n = p * p;
    let rows = c_out * g_in * c_in;
    let flat = tape.reshape(coeffs, &[rows, n])?;
    let basis = tape.constant(bank.stacked.clone());
    let rotated = tape.matmul(flat, basis)?; // [rows, t * n]
    let t_in = if g_in == 1 { 1 } else { t };
    let mut index = Vec::with_capacity(c_out * t * c_in * t_in * n);
    for o in 0..c_out {
        for a in 0..t {
            for c in 0..c_in {
                for b in 0..t_in {
                    let g = if g_in == 1 { 0 } else { (b + t - a) % t };
                    let row = (o * g_in + g) * c_in + c;
                    let base = row * t * n + a * n;
                    index.extend(base..base + n);
                }
            }
        }
    }
    tape.gather(rotated, &[c_out * t, c_in * t_in, p, p], Arc::new(index))
}

/// Broadcasts a per-channel bias `[c]` to `[c * t, h, w]`, shared across slots.
pub fn broadcast_bias(tape: &mut Tape, bias: Var, t: usize, h: usize, w: usize) -> Result<Var> {
    let c = tape.value(bias).len();
    let hw = h * w;
    let mut index = Vec::with_capacity(c * t * hw);
    for ch in 0..c {
        for _ in 0..t {
            index.extend(std::iter::repeat(ch).take(hw));
        }
    }
    tape.gather(bias, &[c * t, h, w], Arc::new(index))
}

/// Lifting or group convolution on tape values: `x` is `[c_in * t_in, h, w]`,
/// `coeffs` is `[c_out, g_in, c_in, p, p]` and `bias` (if any) is `[c_out]`.
pub fn conv_layer(
    tape: &mut Tape,
    x: Var,
    coeffs: Var,
    bias: Option<Var>,
    bank: &RotatedBasis,
    pad: Padding,
) -> Result<Var> {
    let kernel = if bank.t == 1 {
        // the single resampling matrix is the identity
        let s = tape.value(coeffs).shape().to_vec();
        if s.len() != 5 || s[1] != 1 {
            return Err(Error::shape(format!(
                "plain filter coefficients must be [o, 1, c, p, p], got {s:?}"
            )));
        }
        tape.reshape(coeffs, &[s[0], s[2], s[3], s[4]])?
    } else {
        assemble_kernel(tape, coeffs, bank)?
    };
    let y = tape.conv2d(x, kernel, pad)?;
    match bias {
        None => Ok(y),
        Some(b) => {
            let s = tape.value(y).shape().to_vec();
            let bb = broadcast_bias(tape, b, bank.t, s[1], s[2])?;
            tape.add(y, bb)
        }
    }
}

/// Lifting convolution: slot `k` of the output is `img` convolved with the
/// filters rotated by `A_k`.
pub fn lifting_conv(
    img: &Image,
    f: &ParamFilter,
    group: &RotationGroup,
    pad: Padding,
) -> Result<GroupFeatureMap> {
    if f.g_in != 1 {
        return Err(Error::shape(format!(
            "lifting filters need g_in = 1, got {}",
            f.g_in
        )));
    }
    if f.c_in != img.c {
        return Err(Error::shape(format!(
            "filter expects {} input channels, image has {}",
            f.c_in, img.c
        )));
    }
    let bank = RotatedBasis::cached(f.p, group)?;
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![img.c, img.h, img.w], img.to_chw())?);
    run_conv(&mut tape, x, f, &bank, pad)
}

/// Group convolution on a feature map that already carries the group axis.
/// With `p = 1` this is the equivariant pointwise layer.
pub fn group_conv(
    input: &GroupFeatureMap,
    f: &ParamFilter,
    group: &RotationGroup,
    pad: Padding,
) -> Result<GroupFeatureMap> {
    if input.t != group.order() || f.g_in != group.order() {
        return Err(Error::GroupMismatch {
            expected: group.order(),
            actual: if input.t != group.order() {
                input.t
            } else {
                f.g_in
            },
        });
    }
    if f.c_in != input.n {
        return Err(Error::shape(format!(
            "filter expects {} input channels, feature map has {}",
            f.c_in, input.n
        )));
    }
    let bank = RotatedBasis::cached(f.p, group)?;
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(
        vec![input.n * input.t, input.h, input.w],
        input.to_chw(),
    )?);
    run_conv(&mut tape, x, f, &bank, pad)
}

fn run_conv(
    tape: &mut Tape,
    x: Var,
    f: &ParamFilter,
    bank: &RotatedBasis,
    pad: Padding,
) -> Result<GroupFeatureMap> {
    let coeffs = tape.constant(f.to_tensor());
    let y = conv_layer(tape, x, coeffs, None, bank, pad)?;
    let out = tape.value(y);
    let (h, w) = (out.shape()[1], out.shape()[2]);
    GroupFeatureMap::from_chw(h, w, f.c_out, bank.t, out.data())
}
