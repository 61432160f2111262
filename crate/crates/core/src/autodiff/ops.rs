//! Forward and backward kernels for the primitive catalogue.

use std::str::FromStr;
use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output covers only positions where the kernel fits entirely.
    Valid,
    /// Zero padding that keeps the spatial size (odd kernels only).
    Same,
}

/// A catalogued primitive together with its attributes.
#[derive(Debug, Clone)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Matmul,
    Conv2d {
        pad: Padding,
    },
    Relu,
    Sin,
    Cos,
    Concat {
        axis: usize,
    },
    Sum {
        axes: Vec<usize>,
    },
    Scale(f64),
    Gather {
        shape: Vec<usize>,
        index: Arc<Vec<usize>>,
    },
    Reshape {
        shape: Vec<usize>,
    },
}

/// Attribute bag for [`Op::from_name`].
#[derive(Debug, Clone, Default)]
pub struct Attrs {
    pub pad: Option<Padding>,
    pub axis: Option<usize>,
    pub axes: Option<Vec<usize>>,
    pub factor: Option<f64>,
    pub shape: Option<Vec<usize>>,
    pub index: Option<Arc<Vec<usize>>>,
}

/// Primitive names accepted by [`Op::from_name`].
pub const CATALOGUE: [&str; 13] = [
    "add", "sub", "mul", "matmul", "conv2d", "relu", "sin", "cos", "concat", "sum", "scale",
    "gather", "reshape",
];

impl FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "valid" => Ok(Padding::Valid),
            "same" => Ok(Padding::Same),
            other => Err(Error::Config(format!("unknown padding `{other}`"))),
        }
    }
}

impl Op {
    pub fn from_name(name: &str, attrs: &Attrs) -> Result<Op> {
        let missing =
            |what: &str| Error::Contract(format!("primitive `{name}` needs attribute `{what}`"));
        Ok(match name {
            "add" => Op::Add,
            "sub" => Op::Sub,
            "mul" => Op::Mul,
            "matmul" => Op::Matmul,
            "conv2d" => Op::Conv2d {
                pad: attrs.pad.unwrap_or(Padding::Valid),
            },
            "relu" => Op::Relu,
            "sin" => Op::Sin,
            "cos" => Op::Cos,
            "concat" => Op::Concat {
                axis: attrs.axis.ok_or_else(|| missing("axis"))?,
            },
            "sum" => Op::Sum {
                axes: attrs.axes.clone().ok_or_else(|| missing("axes"))?,
            },
            "scale" => Op::Scale(attrs.factor.ok_or_else(|| missing("factor"))?),
            "gather" => Op::Gather {
                shape: attrs.shape.clone().ok_or_else(|| missing("shape"))?,
                index: attrs.index.clone().ok_or_else(|| missing("index"))?,
            },
            "reshape" => Op::Reshape {
                shape: attrs.shape.clone().ok_or_else(|| missing("shape"))?,
            },
            other => return Err(Error::Catalogue(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Matmul => "matmul",
            Op::Conv2d { .. } => "conv2d",
            Op::Relu => "relu",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Concat { .. } => "concat",
            Op::Sum { .. } => "sum",
            Op::Scale(_) => "scale",
            Op::Gather { .. } => "gather",
            Op::Reshape { .. } => "reshape",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::Matmul | Op::Conv2d { .. } => Some(2),
            Op::Concat { .. } => None,
            _ => Some(1),
        }
    }

    pub(crate) fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        if let Some(n) = self.arity() {
            if inputs.len() != n {
                return Err(Error::shape(format!(
                    "`{}` takes {n} inputs, got {}",
                    self.name(),
                    inputs.len()
                )));
            }
        }
        match self {
            Op::Add => zip_same(inputs[0], inputs[1], "add", |a, b| a + b),
            Op::Sub => zip_same(inputs[0], inputs[1], "sub", |a, b| a - b),
            Op::Mul => zip_same(inputs[0], inputs[1], "mul", |a, b| a * b),
            Op::Matmul => matmul_forward(inputs[0], inputs[1]),
            Op::Conv2d { pad } => conv2d_forward(inputs[0], inputs[1], *pad),
            Op::Relu => Ok(map(inputs[0], |v| if v > 0.0 { v } else { 0.0 })),
            Op::Sin => Ok(map(inputs[0], f64::sin)),
            Op::Cos => Ok(map(inputs[0], f64::cos)),
            Op::Concat { axis } => concat_forward(inputs, *axis),
            Op::Sum { axes } => sum_forward(inputs[0], axes),
            Op::Scale(f) => Ok(map(inputs[0], |v| f * v)),
            Op::Gather { shape, index } => gather_forward(inputs[0], shape, index),
            Op::Reshape { shape } => {
                let numel: usize = shape.iter().product();
                if numel != inputs[0].len() {
                    return Err(Error::shape(format!(
                        "cannot reshape {:?} into {shape:?}",
                        inputs[0].shape()
                    )));
                }
                Ok(inputs[0].clone().with_shape(shape.clone()))
            }
        }
    }

    /// Gradients with respect to each input; `None` where `needs[i]` is false.
    pub(crate) fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
        needs: &[bool],
    ) -> Vec<Option<Tensor>> {
        let want = |i: usize| needs.get(i).copied().unwrap_or(false);
        match self {
            Op::Add => vec![
                want(0).then(|| grad.clone().with_shape(inputs[0].shape().to_vec())),
                want(1).then(|| grad.clone().with_shape(inputs[1].shape().to_vec())),
            ],
            Op::Sub => vec![
                want(0).then(|| grad.clone()),
                want(1).then(|| map(grad, |g| -g)),
            ],
            Op::Mul => vec![
                want(0).then(|| zip(grad, inputs[1], |g, b| g * b)),
                want(1).then(|| zip(grad, inputs[0], |g, a| g * a)),
            ],
            Op::Matmul => matmul_backward(inputs[0], inputs[1], grad, want(0), want(1)),
            Op::Conv2d { pad } => {
                conv2d_backward(inputs[0], inputs[1], grad, *pad, want(0), want(1))
            }
            Op::Relu => {
                vec![want(0).then(|| zip(grad, inputs[0], |g, x| if x > 0.0 { g } else { 0.0 }))]
            }
            Op::Sin => vec![want(0).then(|| zip(grad, inputs[0], |g, x| g * x.cos()))],
            Op::Cos => vec![want(0).then(|| zip(grad, inputs[0], |g, x| -g * x.sin()))],
            Op::Concat { axis } => concat_backward(inputs, grad, *axis, needs),
            Op::Sum { axes } => vec![want(0).then(|| sum_backward(inputs[0], grad, axes))],
            Op::Scale(f) => vec![want(0).then(|| map(grad, |g| f * g))],
            Op::Gather { index, .. } => vec![want(0).then(|| {
                let mut out = Tensor::zeros(inputs[0].shape());
                let d = out.data_mut();
                for (g, &src) in grad.data().iter().zip(index.iter()) {
                    d[src] += g;
                }
                out
            })],
            Op::Reshape { .. } => {
                let _ = output;
                vec![want(0).then(|| grad.clone().with_shape(inputs[0].shape().to_vec()))]
            }
        }
    }
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect()).expect("same length")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(b.shape().to_vec(), data).expect("same length")
}

fn zip_same(a: &Tensor, b: &Tensor, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "`{name}` needs equal shapes, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(zip(a, b, f))
}

fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    match (a.shape(), b.shape()) {
        ([m, k], [k2, n]) if k == k2 => Ok((*m, *k, *n)),
        ([m, k], [k2]) if k == k2 => Ok((*m, *k, 1)),
        (sa, sb) => Err(Error::shape(format!("matmul of {sa:?} and {sb:?}"))),
    }
}

/// `c += a * b` for row-major `a: m x k`, `b: k x n`.
///
/// Eight-column panels of `b` are packed contiguously and multiplied against
/// four rows of `a` at a time into a 4x8 accumulator block.
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let panels = n.div_ceil(NR);
    let mut packed = vec![0.0; panels * k * NR];
    for (jp, panel) in packed.chunks_exact_mut(k * NR).enumerate() {
        let j0 = jp * NR;
        let nr = NR.min(n - j0);
        for p in 0..k {
            panel[p * NR..p * NR + nr].copy_from_slice(&b[p * n + j0..p * n + j0 + nr]);
        }
    }
    #[cfg(target_arch = "x86_64")]
    let fast =
        std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma");
    // panels per chunk, so one chunk of packed `b` stays in L2
    let chunk = (L2_DOUBLES / (k * NR)).max(1);
    for c0 in (0..panels).step_by(chunk) {
        let c1 = (c0 + chunk).min(panels);
        let mut i = 0;
        while i < m {
            let rows = MR.min(m - i);
            for jp in c0..c1 {
                let panel = &packed[jp * k * NR..(jp + 1) * k * NR];
                let j0 = jp * NR;
                let nr = NR.min(n - j0);
                let mut acc = [[0.0f64; NR]; MR];
                if rows == MR {
                    let ablock = &a[i * k..(i + MR) * k];
                    #[cfg(target_arch = "x86_64")]
                    if fast {
                        // SAFETY: avx2 and fma were detected at runtime.
                        unsafe { micro_avx2(ablock, panel, k, &mut acc) };
                    } else {
                        micro_generic(ablock, panel, k, &mut acc);
                    }
                    #[cfg(not(target_arch = "x86_64"))]
                    micro_generic(ablock, panel, k, &mut acc);
                } else {
                    for (r, row) in acc.iter_mut().enumerate().take(rows) {
                        let arow = &a[(i + r) * k..(i + r + 1) * k];
                        for (&av, bp) in arow.iter().zip(panel.chunks_exact(NR)) {
                            for q in 0..NR {
                                row[q] += av * bp[q];
                            }
                        }
                    }
                }
                for (r, row) in acc.iter().enumerate().take(rows) {
                    let crow = &mut c[(i + r) * n + j0..(i + r) * n + j0 + nr];
                    for (cv, &v) in crow.iter_mut().zip(row) {
                        *cv += v;
                    }
                }
            }
            i += MR;
        }
    }
}

const L2_DOUBLES: usize = 32 * 1024;
const MR: usize = 4;
const NR: usize = 8;

fn micro_generic(a: &[f64], panel: &[f64], k: usize, acc: &mut [[f64; NR]; MR]) {
    for (p, bp) in panel.chunks_exact(NR).enumerate().take(k) {
        for r in 0..MR {
            let av = a[r * k + p];
            for q in 0..NR {
                acc[r][q] += av * bp[q];
            }
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn micro_avx2(a: &[f64], panel: &[f64], k: usize, acc: &mut [[f64; NR]; MR]) {
    use std::arch::x86_64::*;
    assert!(a.len() >= MR * k && panel.len() >= NR * k);
    let mut c = [[_mm256_setzero_pd(); 2]; MR];
    let pa = a.as_ptr();
    let pb = panel.as_ptr();
    for p in 0..k {
        let b0 = _mm256_loadu_pd(pb.add(p * NR));
        let b1 = _mm256_loadu_pd(pb.add(p * NR + 4));
        for r in 0..MR {
            let av = _mm256_set1_pd(*pa.add(r * k + p));
            c[r][0] = _mm256_fmadd_pd(av, b0, c[r][0]);
            c[r][1] = _mm256_fmadd_pd(av, b1, c[r][1]);
        }
    }
    for r in 0..MR {
        _mm256_storeu_pd(acc[r].as_mut_ptr(), c[r][0]);
        _mm256_storeu_pd(acc[r].as_mut_ptr().add(4), c[r][1]);
    }
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn matmul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k, n) = matmul_dims(a, b)?;
    let mut out = vec![0.0; m * n];
    gemm_acc(a.data(), b.data(), &mut out, m, k, n);
    let shape = if b.rank() == 1 { vec![m] } else { vec![m, n] };
    Tensor::new(shape, out)
}

fn matmul_backward(a: &Tensor, b: &Tensor, g: &Tensor, wa: bool, wb: bool) -> Vec<Option<Tensor>> {
    let (m, k, n) = matmul_dims(a, b).expect("validated in forward");
    let ga = wa.then(|| {
        // dA = dC * B^T
        let mut out = vec![0.0; m * k];
        gemm_acc(g.data(), &transpose(b.data(), k, n), &mut out, m, n, k);
        Tensor::new(a.shape().to_vec(), out).expect("shape")
    });
    let gb = wb.then(|| {
        // dB = A^T * dC
        let mut out = vec![0.0; k * n];
        gemm_acc(&transpose(a.data(), m, k), g.data(), &mut out, k, m, n);
        Tensor::new(b.shape().to_vec(), out).expect("shape")
    });
    vec![ga, gb]
}

struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    pt: isize,
    pl: isize,
}

impl ConvGeom {
    fn new(x: &Tensor, k: &Tensor, pad: Padding) -> Result<Self> {
        let (cin, h, w) = match x.shape() {
            [c, h, w] => (*c, *h, *w),
            s => {
                return Err(Error::shape(format!(
                    "conv2d input must be [c, h, w], got {s:?}"
                )))
            }
        };
        let (cout, kc, kh, kw) = match k.shape() {
            [o, c, kh, kw] => (*o, *c, *kh, *kw),
            s => {
                return Err(Error::shape(format!(
                    "conv2d kernel must be [o, c, kh, kw], got {s:?}"
                )))
            }
        };
        if kc != cin {
            return Err(Error::shape(format!(
                "conv2d kernel expects {kc} input channels, got {cin}"
            )));
        }
        let (oh, ow, pt, pl) = match pad {
            Padding::Valid => {
                if kh > h || kw > w {
                    return Err(Error::shape(
                        "conv2d kernel larger than input in valid mode",
                    ));
                }
                (h - kh + 1, w - kw + 1, 0, 0)
            }
            Padding::Same => {
                if kh % 2 == 0 || kw % 2 == 0 {
                    return Err(Error::shape("same padding needs odd kernel sizes"));
                }
                (h, w, (kh / 2) as isize, (kw / 2) as isize)
            }
        };
        Ok(Self {
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            oh,
            ow,
            pt,
            pl,
        })
    }

    /// Output rows `y` with `0 <= y + r - pt < h`.
    fn rows(&self, r: usize) -> (usize, usize) {
        span(r as isize - self.pt, self.h, self.oh)
    }

    fn cols(&self, s: usize) -> (usize, usize) {
        span(s as isize - self.pl, self.w, self.ow)
    }
}

fn span(shift: isize, n_in: usize, n_out: usize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = ((n_in as isize - shift).min(n_out as isize)).max(0) as usize;
    (lo, hi.max(lo))
}

/// Patch matrix `[cin * kh * kw, oh * ow]`; row `(c * kh + r) * kw + s`
/// holds input channel `c` shifted by `(r, s)`, zero outside the input.
fn im2col(g: &ConvGeom, xd: &[f64]) -> Vec<f64> {
    let n = g.oh * g.ow;
    let mut cols = vec![0.0; g.cin * g.kh * g.kw * n];
    for c in 0..g.cin {
        let iplane = &xd[c * g.h * g.w..(c + 1) * g.h * g.w];
        for r in 0..g.kh {
            let (y0, y1) = g.rows(r);
            for s in 0..g.kw {
                let (x0, x1) = g.cols(s);
                if x0 >= x1 {
                    continue;
                }
                let row = &mut cols[((c * g.kh + r) * g.kw + s) * n..][..n];
                for y in y0..y1 {
                    let iy = (y as isize + r as isize - g.pt) as usize;
                    let ix0 = (x0 as isize + s as isize - g.pl) as usize;
                    row[y * g.ow + x0..y * g.ow + x1]
                        .copy_from_slice(&iplane[iy * g.w + ix0..iy * g.w + ix0 + (x1 - x0)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds patch rows back onto the input.
fn col2im(g: &ConvGeom, cols: &[f64]) -> Vec<f64> {
    let n = g.oh * g.ow;
    let mut out = vec![0.0; g.cin * g.h * g.w];
    for c in 0..g.cin {
        let iplane = &mut out[c * g.h * g.w..(c + 1) * g.h * g.w];
        for r in 0..g.kh {
            let (y0, y1) = g.rows(r);
            for s in 0..g.kw {
                let (x0, x1) = g.cols(s);
                if x0 >= x1 {
                    continue;
                }
                let row = &cols[((c * g.kh + r) * g.kw + s) * n..][..n];
                for y in y0..y1 {
                    let iy = (y as isize + r as isize - g.pt) as usize;
                    let ix0 = (x0 as isize + s as isize - g.pl) as usize;
                    let dst = &mut iplane[iy * g.w + ix0..iy * g.w + ix0 + (x1 - x0)];
                    for (d, &v) in dst.iter_mut().zip(&row[y * g.ow + x0..y * g.ow + x1]) {
                        *d += v;
                    }
                }
            }
        }
    }
    out
}

fn conv2d_forward(x: &Tensor, k: &Tensor, pad: Padding) -> Result<Tensor> {
    let g = ConvGeom::new(x, k, pad)?;
    let kk = g.cin * g.kh * g.kw;
    let n = g.oh * g.ow;
    let cols = im2col(&g, x.data());
    let mut out = vec![0.0; g.cout * n];
    gemm_acc(k.data(), &cols, &mut out, g.cout, kk, n);
    Tensor::new(vec![g.cout, g.oh, g.ow], out)
}

fn conv2d_backward(
    x: &Tensor,
    k: &Tensor,
    grad: &Tensor,
    pad: Padding,
    wx: bool,
    wk: bool,
) -> Vec<Option<Tensor>> {
    let g = ConvGeom::new(x, k, pad).expect("validated in forward");
    let kk = g.cin * g.kh * g.kw;
    let n = g.oh * g.ow;
    let gx = wx.then(|| {
        let mut gcols = vec![0.0; kk * n];
        gemm_acc(
            &transpose(k.data(), g.cout, kk),
            grad.data(),
            &mut gcols,
            kk,
            g.cout,
            n,
        );
        Tensor::new(x.shape().to_vec(), col2im(&g, &gcols)).expect("shape")
    });
    let gk = wk.then(|| {
        let cols_t = transpose(&im2col(&g, x.data()), kk, n);
        let mut out = vec![0.0; k.len()];
        gemm_acc(grad.data(), &cols_t, &mut out, g.cout, n, kk);
        Tensor::new(k.shape().to_vec(), out).expect("shape")
    });
    vec![gx, gk]
}

fn concat_forward(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::shape("concat needs at least one input"))?;
    let rank = first.rank();
    if axis >= rank {
        return Err(Error::shape(format!(
            "concat axis {axis} out of range for rank {rank}"
        )));
    }
    let mut total = 0;
    for t in inputs {
        if t.rank() != rank
            || t.shape()[..axis] != first.shape()[..axis]
            || t.shape()[axis + 1..] != first.shape()[axis + 1..]
        {
            return Err(Error::shape(format!(
                "concat along axis {axis} of {:?} and {:?}",
                first.shape(),
                t.shape()
            )));
        }
        total += t.shape()[axis];
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for t in inputs {
            let chunk = t.shape()[axis] * inner;
            data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Tensor::new(shape, data)
}

fn concat_backward(
    inputs: &[&Tensor],
    grad: &Tensor,
    axis: usize,
    needs: &[bool],
) -> Vec<Option<Tensor>> {
    let outer: usize = inputs[0].shape()[..axis].iter().product();
    let inner: usize = inputs[0].shape()[axis + 1..].iter().product();
    let total: usize = inputs.iter().map(|t| t.shape()[axis]).sum();
    let gd = grad.data();
    let mut offset = 0;
    let mut out = Vec::with_capacity(inputs.len());
    for (i, t) in inputs.iter().enumerate() {
        let chunk = t.shape()[axis] * inner;
        if needs.get(i).copied().unwrap_or(false) {
            let mut data = Vec::with_capacity(t.len());
            for o in 0..outer {
                let start = o * total * inner + offset;
                data.extend_from_slice(&gd[start..start + chunk]);
            }
            out.push(Some(Tensor::new(t.shape().to_vec(), data).expect("shape")));
        } else {
            out.push(None);
        }
        offset += chunk;
    }
    out
}

/// Maps every input flat index to its output flat index after reducing `axes`.
fn reduction_map(shape: &[usize], axes: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let rank = shape.len();
    let mut reduce = vec![false; rank];
    for &a in axes {
        if a >= rank || reduce[a] {
            return Err(Error::shape(format!(
                "invalid sum axes {axes:?} for shape {shape:?}"
            )));
        }
        reduce[a] = true;
    }
    let out_shape: Vec<usize> = (0..rank)
        .filter(|&d| !reduce[d])
        .map(|d| shape[d])
        .collect();
    // output stride contributed by each input axis (0 for reduced axes)
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for d in (0..rank).rev() {
        if !reduce[d] {
            strides[d] = acc;
            acc *= shape[d];
        }
    }
    let numel: usize = shape.iter().product();
    let mut map = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    for _ in 0..numel {
        map.push(idx.iter().zip(&strides).map(|(i, s)| i * s).sum());
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok((out_shape, map))
}

fn sum_forward(x: &Tensor, axes: &[usize]) -> Result<Tensor> {
    let (out_shape, map) = reduction_map(x.shape(), axes)?;
    let mut out = vec![0.0; out_shape.iter().product()];
    for (&v, &o) in x.data().iter().zip(&map) {
        out[o] += v;
    }
    Tensor::new(out_shape, out)
}

fn sum_backward(x: &Tensor, grad: &Tensor, axes: &[usize]) -> Tensor {
    let (_, map) = reduction_map(x.shape(), axes).expect("validated in forward");
    let gd = grad.data();
    Tensor::new(x.shape().to_vec(), map.iter().map(|&o| gd[o]).collect()).expect("shape")
}

fn gather_forward(x: &Tensor, shape: &[usize], index: &[usize]) -> Result<Tensor> {
    let numel: usize = shape.iter().product();
    if numel != index.len() {
        return Err(Error::shape(format!(
            "gather shape {shape:?} needs {numel} indices, got {}",
            index.len()
        )));
    }
    let xd = x.data();
    let mut out = Vec::with_capacity(numel);
    for &i in index {
        out.push(*xd.get(i).ok_or_else(|| {
            Error::shape(format!(
                "gather index {i} out of range for {} elements",
                xd.len()
            ))
        })?);
    }
    Tensor::new(shape.to_vec(), out)
}
