//! Rotation-equivariant implicit neural representations.
//!
//! A latent code `F_ij` carries one feature vector per group slot. The
//! input layer turns it and a query offset `x` into values `H(x, B)` for
//! every slot `B` by summing `φ(W_in^{B^{-1}A}, F^A, A^{-1} x)` over `A`.
//! Intermediate layers mix slots with cyclically shared matrices and the
//! output layer collapses the group axis with a single shared matrix before
//! the decoder MLP `ψ`.
//!
//! All layers run on whole query batches: `H` is a `[rows, t * m]` tensor
//! with column `b * m + r` holding channel `r` of slot `b`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Padding, Tape, Tensor, Var};
use crate::encoder::{Encoder, EncoderConfig, Variant};
use crate::error::{Error, Result};
use crate::filter::{conv_layer, RotatedBasis};
use crate::group::{pixel_coord, Image, RotationGroup};
use crate::params::{he_uniform, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InrKind {
    /// `φ(W, F, x) = W [F; x]`
    Liif,
    /// `φ(F, x) = Fᵀ P(x)` with a 2-D Fourier basis, parameter free.
    Ope,
    /// `φ(F, x) = F̂ ⊙ [cos(π F̃ x); sin(π F̃ x)]`
    Lte,
}

impl InrKind {
    pub fn name(self) -> &'static str {
        match self {
            InrKind::Liif => "liif",
            InrKind::Ope => "ope",
            InrKind::Lte => "lte",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Nearest,
    #[default]
    Ensemble,
}

fn default_eps() -> f64 {
    1e-7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InrConfig {
    pub kind: InrKind,
    /// Number of intermediate layers.
    #[serde(rename = "L")]
    pub layers: usize,
    /// `[m, out1, psi hidden...]`: per-slot width of the input and
    /// intermediate layers, output width of `W_out1`, hidden widths of `ψ`.
    pub widths: Vec<usize>,
    pub k_max: usize,
    #[serde(rename = "K")]
    pub k_lte: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub mode: EvalMode,
}

impl InrConfig {
    /// Desk-scale defaults for a group of order `t` (32 channels in total).
    pub fn desk(kind: InrKind, t: usize) -> Self {
        Self {
            kind,
            layers: 0,
            widths: vec![(32 / t).max(1), 32, 32],
            k_max: 3,
            k_lte: 16,
            eps: 1e-7,
            mode: EvalMode::Ensemble,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub inr: InrConfig,
}

impl ModelConfig {
    pub fn desk(kind: InrKind, t: usize) -> Self {
        Self {
            encoder: EncoderConfig::desk(t),
            inr: InrConfig::desk(kind, t),
        }
    }

    pub fn t(&self) -> usize {
        self.encoder.t
    }

    /// Non-equivariant model with the same total widths.
    pub fn plain_counterpart(&self) -> Self {
        let t = self.encoder.t;
        let mut inr = self.inr.clone();
        inr.widths[0] *= t;
        inr.k_lte *= t;
        Self {
            encoder: self.encoder.plain_counterpart(),
            inr,
        }
    }

    /// Equivariant model of group order `t` keeping the total encoder and
    /// INR widths of this one.
    pub fn for_group(&self, t: usize) -> Self {
        let t0 = self.encoder.t;
        let mut out = self.clone();
        out.encoder.variant = Variant::Equivariant;
        out.encoder.t = t;
        out.encoder.n = (self.encoder.n * t0 / t).max(1);
        out.inr.widths[0] = (self.inr.widths[0] * t0 / t).max(1);
        out
    }

    pub fn is_equivariant(&self) -> bool {
        self.encoder.variant == Variant::Equivariant
    }
}

/// 1-D orthonormal (for the mean over `[-1, 1]`) Fourier basis:
/// `1, √2 cos πx, √2 sin πx, ..., √2 cos kπx, √2 sin kπx`.
pub fn fourier_1d(x: f64, k_max: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * k_max + 1);
    v.push(1.0);
    for l in 1..=k_max {
        let a = l as f64 * PI * x;
        v.push(std::f64::consts::SQRT_2 * a.cos());
        v.push(std::f64::consts::SQRT_2 * a.sin());
    }
    v
}

/// The 2-D basis vector `P(x)`, entry `j * (2k+1) + i` = `b_i(x_1) b_j(x_2)`.
pub fn ope_basis(x: [f64; 2], k_max: usize) -> Vec<f64> {
    let bx = fourier_1d(x[0], k_max);
    let by = fourier_1d(x[1], k_max);
    let mut v = Vec::with_capacity(bx.len() * by.len());
    for b in &by {
        for a in &bx {
            v.push(a * b);
        }
    }
    v
}

/// `A_k^{-1} x` for every group element.
pub fn lift_coordinate(x: [f64; 2], group: &RotationGroup) -> Vec<[f64; 2]> {
    (0..group.order())
        .map(|k| {
            let a = group.matrix(k);
            [
                a[0][0] * x[0] + a[1][0] * x[1],
                a[0][1] * x[0] + a[1][1] * x[1],
            ]
        })
        .collect()
}

/// Query rows for the local functions: which latent code, at which
/// normalized offset, and (for the ensemble) with which weight.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub pix: Vec<usize>,
    pub offsets: Vec<[f64; 2]>,
    /// Present in ensemble mode: four weights per query, summing to 1.
    pub weights: Option<Vec<f64>>,
}

impl QueryPlan {
    pub fn queries(&self) -> usize {
        match self.weights {
            Some(_) => self.pix.len() / 4,
            None => self.pix.len(),
        }
    }
}

/// Index of the LR cell containing `u` (in units of cells from the low
/// edge); boundaries go to the lower index.
fn cell_index(u: f64, n: usize) -> usize {
    let k = u.ceil() as i64 - 1;
    k.clamp(0, n as i64 - 1) as usize
}

/// Plans the local evaluations for global query points on an `h x w` grid.
pub fn plan_queries(
    h: usize,
    w: usize,
    points: &[[f64; 2]],
    mode: EvalMode,
    eps: f64,
) -> Result<QueryPlan> {
    let (dx, dy) = (2.0 / w as f64, 2.0 / h as f64);
    let local = |i: usize, j: usize, x: [f64; 2]| -> [f64; 2] {
        let c = pixel_coord(h, w, i, j);
        [
            (x[0] - c[0]) * 2.0 / dx + eps,
            (x[1] - c[1]) * 2.0 / dy + eps,
        ]
    };
    let per = if mode == EvalMode::Ensemble { 4 } else { 1 };
    let mut plan = QueryPlan {
        pix: Vec::with_capacity(points.len() * per),
        offsets: Vec::with_capacity(points.len() * per),
        weights: (mode == EvalMode::Ensemble).then(|| Vec::with_capacity(points.len() * 4)),
    };
    for &x in points {
        if !(x[0].abs() <= 1.0 && x[1].abs() <= 1.0) {
            return Err(Error::Domain(format!(
                "query point {x:?} outside [-1, 1]^2"
            )));
        }
        match mode {
            EvalMode::Nearest => {
                let j = cell_index((x[0] + 1.0) / dx, w);
                let i = cell_index((1.0 - x[1]) / dy, h);
                plan.pix.push(i * w + j);
                plan.offsets.push(local(i, j, x));
            }
            EvalMode::Ensemble => {
                let u = (x[0] + 1.0) / dx - 0.5;
                let v = (1.0 - x[1]) / dy - 0.5;
                let (j0, i0) = (u.floor(), v.floor());
                let (fu, fv) = (u - j0, v - i0);
                let weights = plan.weights.as_mut().expect("ensemble");
                for (di, wi) in [(0, 1.0 - fv), (1, fv)] {
                    for (dj, wj) in [(0, 1.0 - fu), (1, fu)] {
                        let i = (i0 as i64 + di).clamp(0, h as i64 - 1) as usize;
                        let j = (j0 as i64 + dj).clamp(0, w as i64 - 1) as usize;
                        plan.pix.push(i * w + j);
                        plan.offsets.push(local(i, j, x));
                        weights.push(wi * wj);
                    }
                }
            }
        }
    }
    Ok(plan)
}

/// Precomputed index maps and constants; everything that depends only on
/// the configuration.
#[derive(Debug, Clone)]
struct Layout {
    t: usize,
    /// latent channels per slot
    code: usize,
    /// per-slot width after the input layer
    m0: usize,
    /// per-slot widths after each intermediate layer
    mids: Vec<usize>,
    out1: usize,
    psi: Vec<usize>,
    c_out: usize,
    /// LIIF: W_in → M_F and M_X
    mf_index: Arc<Vec<usize>>,
    mx_index: Arc<Vec<usize>>,
    /// `[2, 2t]`, entry `(d, a*2+e)` = `A_a[d][e]`
    lift: Tensor,
    mid_index: Vec<Arc<Vec<usize>>>,
    out_index: Arc<Vec<usize>>,
}

/// Cyclic block matrix index: `M[(b*m_in + c), (a*m_out + r)] = W[(b - a) mod t, r, c]`.
fn cyclic_index(t: usize, m_in: usize, m_out: usize) -> Arc<Vec<usize>> {
    let mut idx = Vec::with_capacity(t * m_in * t * m_out);
    for b in 0..t {
        for c in 0..m_in {
            for a in 0..t {
                for r in 0..m_out {
                    idx.push((((b + t - a) % t) * m_out + r) * m_in + c);
                }
            }
        }
    }
    Arc::new(idx)
}

/// Index of a row-major transpose: `[rows, cols]` → `[cols, rows]`.
fn transpose_index(rows: usize, cols: usize) -> Arc<Vec<usize>> {
    let mut idx = Vec::with_capacity(rows * cols);
    for c in 0..cols {
        for r in 0..rows {
            idx.push(r * cols + c);
        }
    }
    Arc::new(idx)
}

/// Replicates a `[rows, width]` row set into `[pix.len(), width]`.
fn row_index(pix: &[usize], width: usize) -> Arc<Vec<usize>> {
    let mut idx = Vec::with_capacity(pix.len() * width);
    for &p in pix {
        idx.extend(p * width..(p + 1) * width);
    }
    Arc::new(idx)
}

/// Broadcast of a `[m]` bias to `[rows, reps * m]`.
fn tile_index(rows: usize, reps: usize, m: usize) -> Arc<Vec<usize>> {
    let mut idx = Vec::with_capacity(rows * reps * m);
    for _ in 0..rows * reps {
        idx.extend(0..m);
    }
    Arc::new(idx)
}

/// Encoder output and per-pixel latent rows, `[h * w, width]` each.
pub struct Latent {
    pub h: usize,
    pub w: usize,
    /// LIIF: `F · M_F`; OPE: Fourier coefficients; LTE: amplitudes, frequencies.
    rows: Vec<Var>,
}

/// Positions of the parameter arrays inside the model's [`ParamSet`].
#[derive(Debug, Clone, Default)]
struct Slots {
    encoder: std::ops::Range<usize>,
    heads: Vec<(usize, Option<usize>)>,
    w_in: Option<(usize, usize)>,
    mids: Vec<(usize, usize)>,
    out1: Option<usize>,
    psi: Vec<(usize, usize)>,
}

/// Encoder, latent heads and INR layers; the parameters live in a
/// [`ParamSet`] so the same architecture serves training and inference.
#[derive(Debug, Clone)]
pub struct Architecture {
    cfg: ModelConfig,
    encoder: Encoder,
    group: RotationGroup,
    head_bank: Arc<RotatedBasis>,
    layout: Layout,
    slots: Slots,
}

impl Architecture {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let encoder = Encoder::new(cfg.encoder.clone())?;
        let group = encoder.group().clone();
        let t = group.order();
        let inr = &cfg.inr;
        let c_out = cfg.encoder.c_in;
        let n = cfg.encoder.n;
        let (code, m0) = match inr.kind {
            InrKind::Liif => {
                if inr.widths.len() < 2 {
                    return Err(Error::Config("liif needs widths [m, out1, ...]".into()));
                }
                (n, inr.widths[0])
            }
            InrKind::Ope => {
                if inr.layers != 0 {
                    return Err(Error::Config(
                        "ope has no intermediate layers (L must be 0)".into(),
                    ));
                }
                let d = (2 * inr.k_max + 1).pow(2);
                (c_out * d, c_out)
            }
            InrKind::Lte => {
                if inr.widths.len() < 2 || inr.k_lte == 0 {
                    return Err(Error::Config(
                        "lte needs K >= 1 and widths [m, out1, ...]".into(),
                    ));
                }
                (4 * inr.k_lte, 2 * inr.k_lte)
            }
        };
        if inr.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("INR widths must be positive".into()));
        }
        if !(inr.eps.is_finite() && inr.eps >= 0.0) {
            return Err(Error::Config(format!(
                "eps must be a finite non-negative number, got {}",
                inr.eps
            )));
        }
        let mids = vec![inr.widths[0]; inr.layers];
        let (out1, psi) = match inr.kind {
            InrKind::Ope => (c_out, Vec::new()),
            _ => (inr.widths[1], inr.widths[2..].to_vec()),
        };
        let mut lift = vec![0.0; 2 * 2 * t];
        for a in 0..t {
            let m = group.matrix(a);
            for d in 0..2 {
                for e in 0..2 {
                    lift[d * 2 * t + a * 2 + e] = m[d][e];
                }
            }
        }
        let (mf_index, mx_index) = if inr.kind == InrKind::Liif {
            let stride = n + 2;
            let mut mf = Vec::with_capacity(n * t * t * m0);
            for c in 0..n {
                for a in 0..t {
                    for b in 0..t {
                        for r in 0..m0 {
                            mf.push((((a + t - b) % t) * m0 + r) * stride + c);
                        }
                    }
                }
            }
            let mut mx = Vec::with_capacity(2 * t * t * m0);
            for a in 0..t {
                for e in 0..2 {
                    for b in 0..t {
                        for r in 0..m0 {
                            mx.push((((a + t - b) % t) * m0 + r) * stride + n + e);
                        }
                    }
                }
            }
            (Arc::new(mf), Arc::new(mx))
        } else {
            (Arc::new(Vec::new()), Arc::new(Vec::new()))
        };
        let mut mid_index = Vec::new();
        let mut m_in = m0;
        for &m_out in &mids {
            mid_index.push(cyclic_index(t, m_in, m_out));
            m_in = m_out;
        }
        let m_last = m_in;
        let mut out_index = Vec::with_capacity(t * m_last * out1);
        for _a in 0..t {
            for c in 0..m_last {
                for r in 0..out1 {
                    out_index.push(r * m_last + c);
                }
            }
        }
        let layout = Layout {
            t,
            code,
            m0,
            mids,
            out1,
            psi,
            c_out,
            mf_index,
            mx_index,
            lift: Tensor::new(vec![2, 2 * t], lift)?,
            mid_index,
            out_index: Arc::new(out_index),
        };
        let head_bank = RotatedBasis::cached(1, &group)?;
        let mut arch = Self {
            cfg,
            encoder,
            group,
            head_bank,
            layout,
            slots: Slots::default(),
        };
        arch.slots = arch.assign_slots();
        Ok(arch)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn group(&self) -> &RotationGroup {
        &self.group
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn kind(&self) -> InrKind {
        self.cfg.inr.kind
    }

    /// Latent channels per slot as seen by the input layer.
    pub fn code_width(&self) -> usize {
        self.layout.code
    }

    /// Per-slot widths of `H` after the input layer and after each
    /// intermediate layer.
    pub fn hidden_widths(&self) -> Vec<usize> {
        let mut v = vec![self.layout.m0];
        v.extend(&self.layout.mids);
        v
    }

    pub fn out_channels(&self) -> usize {
        self.layout.c_out
    }

    fn head_channels(&self) -> Vec<usize> {
        match self.cfg.inr.kind {
            InrKind::Liif => Vec::new(),
            InrKind::Ope => vec![self.layout.code],
            InrKind::Lte => vec![2 * self.cfg.inr.k_lte, 2 * self.cfg.inr.k_lte],
        }
    }

    fn assign_slots(&self) -> Slots {
        let mut next = 0;
        let mut take = |k: usize| {
            let s = next;
            next += k;
            s
        };
        let enc = self.encoder.param_arrays();
        let encoder = take(enc)..enc;
        let bias = self.cfg.encoder.bias;
        let heads = self
            .head_channels()
            .iter()
            .map(|_| (take(1), bias.then(|| take(1))))
            .collect();
        let (w_in, mids, out1, psi) = if self.cfg.inr.kind == InrKind::Ope {
            (None, Vec::new(), None, Vec::new())
        } else {
            let w_in = (self.cfg.inr.kind == InrKind::Liif).then(|| (take(1), take(1)));
            let mids = self
                .layout
                .mids
                .iter()
                .map(|_| (take(1), take(1)))
                .collect();
            let out1 = Some(take(1));
            let psi = (0..=self.layout.psi.len())
                .map(|_| (take(1), take(1)))
                .collect();
            (w_in, mids, out1, psi)
        };
        Slots {
            encoder,
            heads,
            w_in,
            mids,
            out1,
            psi,
        }
    }

    /// Seeded initialization: He-uniform weights, zero biases.
    pub fn init_params(&self, seed: u64) -> Result<ParamSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = ParamSet::new();
        self.encoder.init_into(&mut set, "enc.", &mut rng)?;
        let t = self.layout.t;
        let n = self.cfg.encoder.n;
        let head_names = ["head0", "head1"];
        for (i, &ch) in self.head_channels().iter().enumerate() {
            let shape = [ch, t, n, 1, 1];
            set.push(
                format!("{}.w", head_names[i]),
                he_uniform(&mut rng, &shape, t * n),
            )?;
            if self.cfg.encoder.bias {
                set.push(format!("{}.b", head_names[i]), Tensor::zeros(&[ch]))?;
            }
        }
        if self.cfg.inr.kind == InrKind::Ope {
            return Ok(set);
        }
        let m0 = self.layout.m0;
        if self.cfg.inr.kind == InrKind::Liif {
            let shape = [t, m0, n + 2];
            set.push("inr.in.w", he_uniform(&mut rng, &shape, t * (n + 2)))?;
            set.push("inr.in.b", Tensor::zeros(&[m0]))?;
        }
        let mut m_in = m0;
        for (l, &m_out) in self.layout.mids.iter().enumerate() {
            set.push(
                format!("inr.mid{l}.w"),
                he_uniform(&mut rng, &[t, m_out, m_in], t * m_in),
            )?;
            set.push(format!("inr.mid{l}.b"), Tensor::zeros(&[m_out]))?;
            m_in = m_out;
        }
        set.push(
            "inr.out1.w",
            he_uniform(&mut rng, &[self.layout.out1, m_in], t * m_in),
        )?;
        let mut prev = self.layout.out1;
        let dims: Vec<usize> = self
            .layout
            .psi
            .iter()
            .copied()
            .chain([self.layout.c_out])
            .collect();
        for (i, &d) in dims.iter().enumerate() {
            set.push(
                format!("inr.psi{i}.w"),
                he_uniform(&mut rng, &[prev, d], prev),
            )?;
            set.push(format!("inr.psi{i}.b"), Tensor::zeros(&[d]))?;
            prev = d;
        }
        Ok(set)
    }

    /// Encodes a `[c, h, w]` image (already shifted to `[-1, 1]`) into
    /// per-pixel latent rows.
    pub fn latent(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Latent> {
        let shape = tape.value(x).shape().to_vec();
        let (h, w) = (shape[1], shape[2]);
        let feat = self
            .encoder
            .forward(tape, &vars[self.slots.encoder.clone()], x)?;
        let t = self.layout.t;
        let hw = h * w;
        let to_rows = |tape: &mut Tape, v: Var| -> Result<Var> {
            let c = tape.value(v).shape()[0];
            tape.gather(v, &[hw, c], transpose_index(c, hw))
        };
        let rows = match self.cfg.inr.kind {
            InrKind::Liif => {
                let (wi, _) = self.slots.w_in.expect("liif");
                let n = self.cfg.encoder.n;
                let mf = tape.gather(
                    vars[wi],
                    &[n * t, t * self.layout.m0],
                    self.layout.mf_index.clone(),
                )?;
                let f = to_rows(tape, feat)?;
                vec![tape.matmul(f, mf)?]
            }
            InrKind::Ope | InrKind::Lte => {
                let mut rows = Vec::new();
                for &(wv, bv) in &self.slots.heads {
                    let y = conv_layer(
                        tape,
                        feat,
                        vars[wv],
                        bv.map(|b| vars[b]),
                        &self.head_bank,
                        Padding::Valid,
                    )?;
                    rows.push(to_rows(tape, y)?);
                }
                rows
            }
        };
        Ok(Latent { h, w, rows })
    }

    /// Input layer on gathered latent rows. `codes[i]` is `[R, code * t]`
    /// (LIIF: already multiplied by `M_F`, `[R, t * m0]`).
    fn input_stage(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        codes: &[Var],
        offsets: &[[f64; 2]],
    ) -> Result<Var> {
        let t = self.layout.t;
        let rows = offsets.len();
        let flat: Vec<f64> = offsets.iter().flat_map(|o| [o[0], o[1]]).collect();
        match self.cfg.inr.kind {
            InrKind::Liif => {
                let (wi, bi) = self.slots.w_in.expect("liif");
                let m0 = self.layout.m0;
                let mx = tape.gather(vars[wi], &[2 * t, t * m0], self.layout.mx_index.clone())?;
                let lift = tape.constant(self.layout.lift.clone());
                let lx = tape.matmul(lift, mx)?;
                let xq = tape.constant(Tensor::new(vec![rows, 2], flat)?);
                let xw = tape.matmul(xq, lx)?;
                let h = tape.add(codes[0], xw)?;
                let b = tape.gather(vars[bi], &[rows, t * m0], tile_index(rows, t, m0))?;
                tape.add(h, b)
            }
            InrKind::Ope => {
                let d = (2 * self.cfg.inr.k_max + 1).pow(2);
                let c = self.layout.c_out;
                let mut basis = vec![0.0; rows * c * d * t];
                for (q, o) in offsets.iter().enumerate() {
                    for (a, x) in lift_coordinate(*o, &self.group).into_iter().enumerate() {
                        for (k, p) in ope_basis(x, self.cfg.inr.k_max).into_iter().enumerate() {
                            for ch in 0..c {
                                basis[((q * c + ch) * d + k) * t + a] = p;
                            }
                        }
                    }
                }
                let basis = tape.constant(Tensor::new(vec![rows, c * d * t], basis)?);
                let prod = tape.mul(codes[0], basis)?;
                let prod = tape.reshape(prod, &[rows, c, d * t])?;
                let h = tape.sum(prod, &[2])?;
                self.replicate(tape, h, rows, c)
            }
            InrKind::Lte => {
                let k = self.cfg.inr.k_lte;
                let mut xs = vec![0.0; rows * 2 * k * t];
                for (q, o) in offsets.iter().enumerate() {
                    for (a, x) in lift_coordinate(*o, &self.group).into_iter().enumerate() {
                        for kk in 0..k {
                            for e in 0..2 {
                                xs[q * 2 * k * t + (kk * 2 + e) * t + a] = x[e];
                            }
                        }
                    }
                }
                let xs = tape.constant(Tensor::new(vec![rows, 2 * k * t], xs)?);
                let fx = tape.mul(codes[1], xs)?;
                let fx = tape.reshape(fx, &[rows, k, 2, t])?;
                let z = tape.sum(fx, &[2])?; // [rows, k, t]
                let z = tape.scale(z, PI)?;
                let cz = tape.cos(z)?;
                let sz = tape.sin(z)?;
                let cs = tape.concat(&[cz, sz], 1)?; // [rows, 2k, t]
                let cs = tape.reshape(cs, &[rows, 2 * k * t])?;
                let prod = tape.mul(codes[0], cs)?;
                let prod = tape.reshape(prod, &[rows, 2 * k, t])?;
                let h = tape.sum(prod, &[2])?;
                self.replicate(tape, h, rows, 2 * k)
            }
        }
    }

    /// A slot-independent `[R, m]` value copied into every slot.
    fn replicate(&self, tape: &mut Tape, h: Var, rows: usize, m: usize) -> Result<Var> {
        let t = self.layout.t;
        let mut idx = Vec::with_capacity(rows * t * m);
        for q in 0..rows {
            for _ in 0..t {
                idx.extend(q * m..(q + 1) * m);
            }
        }
        tape.gather(h, &[rows, t * m], Arc::new(idx))
    }

    fn input_relu(&self) -> bool {
        self.cfg.inr.kind == InrKind::Liif
    }

    /// Intermediate layer `l` without activation.
    fn intermediate_stage(&self, tape: &mut Tape, vars: &[Var], l: usize, h: Var) -> Result<Var> {
        let t = self.layout.t;
        let rows = tape.value(h).shape()[0];
        let m_in = if l == 0 {
            self.layout.m0
        } else {
            self.layout.mids[l - 1]
        };
        let m_out = self.layout.mids[l];
        let (wv, bv) = self.slots.mids[l];
        let m = tape.gather(
            vars[wv],
            &[t * m_in, t * m_out],
            self.layout.mid_index[l].clone(),
        )?;
        let y = tape.matmul(h, m)?;
        let b = tape.gather(vars[bv], &[rows, t * m_out], tile_index(rows, t, m_out))?;
        tape.add(y, b)
    }

    fn output_stage(&self, tape: &mut Tape, vars: &[Var], h: Var) -> Result<Var> {
        let t = self.layout.t;
        let m_last = *self.layout.mids.last().unwrap_or(&self.layout.m0);
        let out1 = self.layout.out1;
        let mut y = match self.slots.out1 {
            Some(ov) => {
                let m =
                    tape.gather(vars[ov], &[t * m_last, out1], self.layout.out_index.clone())?;
                tape.matmul(h, m)?
            }
            None => {
                // fixed W_out1 = I / t
                let mut m = vec![0.0; t * m_last * out1];
                for a in 0..t {
                    for c in 0..m_last {
                        m[(a * m_last + c) * out1 + c] = 1.0 / t as f64;
                    }
                }
                let m = tape.constant(Tensor::new(vec![t * m_last, out1], m)?);
                tape.matmul(h, m)?
            }
        };
        let rows = tape.value(y).shape()[0];
        let last = self.slots.psi.len();
        for (i, &(wv, bv)) in self.slots.psi.iter().enumerate() {
            let d = tape.value(vars[wv]).shape()[1];
            y = tape.matmul(y, vars[wv])?;
            let b = tape.gather(vars[bv], &[rows, d], tile_index(rows, 1, d))?;
            y = tape.add(y, b)?;
            if i + 1 < last {
                y = tape.relu(y)?;
            }
        }
        Ok(y)
    }

    /// Full local function on gathered latent rows.
    fn local_stage(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        codes: &[Var],
        offsets: &[[f64; 2]],
    ) -> Result<Var> {
        let mut h = self.input_stage(tape, vars, codes, offsets)?;
        if self.input_relu() {
            h = tape.relu(h)?;
        }
        for l in 0..self.layout.mids.len() {
            h = self.intermediate_stage(tape, vars, l, h)?;
            h = tape.relu(h)?;
        }
        self.output_stage(tape, vars, h)
    }

    /// Evaluates planned queries; returns `[queries, c_out]`.
    pub fn decode(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        latent: &Latent,
        plan: &QueryPlan,
    ) -> Result<Var> {
        let hw = latent.h * latent.w;
        if let Some(&bad) = plan.pix.iter().find(|&&p| p >= hw) {
            return Err(Error::shape(format!(
                "latent row {bad} out of range for {hw} pixels"
            )));
        }
        let mut codes = Vec::with_capacity(latent.rows.len());
        for &r in &latent.rows {
            let width = tape.value(r).shape()[1];
            codes.push(tape.gather(r, &[plan.pix.len(), width], row_index(&plan.pix, width))?);
        }
        let y = self.local_stage(tape, vars, &codes, &plan.offsets)?;
        let Some(weights) = &plan.weights else {
            return Ok(y);
        };
        let c = self.layout.c_out;
        let rows = plan.pix.len();
        let wt: Vec<f64> = weights
            .iter()
            .flat_map(|&w| std::iter::repeat(w).take(c))
            .collect();
        let wt = tape.constant(Tensor::new(vec![rows, c], wt)?);
        let y = tape.mul(y, wt)?;
        let y = tape.reshape(y, &[rows / 4, 4, c])?;
        tape.sum(y, &[1])
    }

    /// Gathers latent codes in the layer-level layout (`c * t + a` per
    /// pixel), undoing the LIIF pre-multiplication. Used for testing and
    /// inspection only.
    pub fn latent_codes(&self, params: &ParamSet, img: &Image) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let vars = params.record(&mut tape, false);
        let x = tape.constant(Tensor::new(
            vec![img.c, img.h, img.w],
            normalize(img).to_chw(),
        )?);
        let feat = self
            .encoder
            .forward(&mut tape, &vars[self.slots.encoder.clone()], x)?;
        let mut parts = vec![feat];
        if self.cfg.inr.kind != InrKind::Liif {
            parts.clear();
            for &(wv, bv) in &self.slots.heads {
                parts.push(conv_layer(
                    &mut tape,
                    feat,
                    vars[wv],
                    bv.map(|b| vars[b]),
                    &self.head_bank,
                    Padding::Valid,
                )?);
            }
        }
        let hw = img.h * img.w;
        let mut out = vec![Vec::new(); hw];
        for p in parts {
            let v = tape.value(p);
            let c = v.shape()[0];
            for (px, code) in out.iter_mut().enumerate() {
                code.extend((0..c).map(|ch| v.data()[ch * hw + px]));
            }
        }
        Ok(out)
    }

    fn split_code(&self, tape: &mut Tape, vars: &[Var], code: &[f64]) -> Result<Vec<Var>> {
        let t = self.layout.t;
        let want = self.layout.code * t;
        if code.len() != want {
            return Err(Error::shape(format!(
                "latent code needs {want} values, got {}",
                code.len()
            )));
        }
        match self.cfg.inr.kind {
            InrKind::Liif => {
                let (wi, _) = self.slots.w_in.expect("liif");
                let n = self.cfg.encoder.n;
                let mf = tape.gather(
                    vars[wi],
                    &[n * t, t * self.layout.m0],
                    self.layout.mf_index.clone(),
                )?;
                let f = tape.constant(Tensor::new(vec![1, want], code.to_vec())?);
                Ok(vec![tape.matmul(f, mf)?])
            }
            InrKind::Ope => Ok(vec![
                tape.constant(Tensor::new(vec![1, want], code.to_vec())?)
            ]),
            InrKind::Lte => {
                let half = want / 2;
                Ok(vec![
                    tape.constant(Tensor::new(vec![1, half], code[..half].to_vec())?),
                    tape.constant(Tensor::new(vec![1, half], code[half..].to_vec())?),
                ])
            }
        }
    }
}

/// Pixel values `[0, 1]` → network range `[-1, 1]`.
pub fn normalize(img: &Image) -> Image {
    img.map(|v| 2.0 * v - 1.0)
}

/// An architecture together with its parameters.
#[derive(Debug, Clone)]
pub struct InrModel {
    pub arch: Architecture,
    pub params: ParamSet,
}

/// Queries evaluated per tape when rendering whole images.
pub const QUERY_CHUNK: usize = 4096;

impl InrModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let arch = Architecture::new(cfg)?;
        let params = arch.init_params(seed)?;
        Ok(Self { arch, params })
    }

    pub fn with_params(cfg: ModelConfig, params: ParamSet) -> Result<Self> {
        let arch = Architecture::new(cfg)?;
        arch.init_params(0)?.check_layout(&params)?;
        Ok(Self { arch, params })
    }

    pub fn config(&self) -> &ModelConfig {
        self.arch.config()
    }

    fn with_tape<T>(
        &self,
        f: impl FnOnce(&Architecture, &mut Tape, &[Var]) -> Result<T>,
    ) -> Result<T> {
        let mut tape = Tape::new();
        let vars = self.params.record(&mut tape, false);
        f(&self.arch, &mut tape, &vars)
    }

    /// `H(x, B)` for every slot, layout `b * m + r`. `code` uses the
    /// per-pixel layout `c * t + a`.
    pub fn input_layer(&self, code: &[f64], x: [f64; 2]) -> Result<Vec<f64>> {
        self.with_tape(|arch, tape, vars| {
            let codes = arch.split_code(tape, vars, code)?;
            let h = arch.input_stage(tape, vars, &codes, &[x])?;
            Ok(tape.value(h).data().to_vec())
        })
    }

    /// Intermediate layer `l` (bias included, no activation).
    pub fn intermediate_layer(&self, l: usize, h: &[f64]) -> Result<Vec<f64>> {
        if l >= self.arch.layout.mids.len() {
            return Err(Error::Config(format!("no intermediate layer {l}")));
        }
        let width = self.arch.layout.t
            * if l == 0 {
                self.arch.layout.m0
            } else {
                self.arch.layout.mids[l - 1]
            };
        if h.len() != width {
            return Err(Error::shape(format!(
                "intermediate layer {l} needs {width} values, got {}",
                h.len()
            )));
        }
        self.with_tape(|arch, tape, vars| {
            let hv = tape.constant(Tensor::new(vec![1, width], h.to_vec())?);
            let y = arch.intermediate_stage(tape, vars, l, hv)?;
            Ok(tape.value(y).data().to_vec())
        })
    }

    /// `ψ(Σ_A W_out1 Ĥ(A))`.
    pub fn output_layer(&self, h: &[f64]) -> Result<Vec<f64>> {
        let m_last = *self.arch.layout.mids.last().unwrap_or(&self.arch.layout.m0);
        let width = self.arch.layout.t * m_last;
        if h.len() != width {
            return Err(Error::shape(format!(
                "output layer needs {width} values, got {}",
                h.len()
            )));
        }
        self.with_tape(|arch, tape, vars| {
            let hv = tape.constant(Tensor::new(vec![1, width], h.to_vec())?);
            let y = arch.output_stage(tape, vars, hv)?;
            Ok(tape.value(y).data().to_vec())
        })
    }

    /// The local implicit function of one latent code at offset `x`.
    pub fn eval_local(&self, code: &[f64], x: [f64; 2]) -> Result<Vec<f64>> {
        self.with_tape(|arch, tape, vars| {
            let codes = arch.split_code(tape, vars, code)?;
            let y = arch.local_stage(tape, vars, &codes, &[x])?;
            Ok(tape.value(y).data().to_vec())
        })
    }

    fn latent_values(&self, img: &Image) -> Result<(usize, usize, Vec<Tensor>)> {
        if img.c != self.arch.cfg.encoder.c_in {
            return Err(Error::shape(format!(
                "model expects {} channels, image has {}",
                self.arch.cfg.encoder.c_in, img.c
            )));
        }
        self.with_tape(|arch, tape, vars| {
            let x = tape.constant(Tensor::new(
                vec![img.c, img.h, img.w],
                normalize(img).to_chw(),
            )?);
            let lat = arch.latent(tape, vars, x)?;
            Ok((
                lat.h,
                lat.w,
                lat.rows.iter().map(|&r| tape.value(r).clone()).collect(),
            ))
        })
    }

    /// Values of the continuous image at arbitrary points of `[-1, 1]^2`,
    /// one `c_out` row per point, in pixel units.
    pub fn eval_points(
        &self,
        img: &Image,
        points: &[[f64; 2]],
        mode: EvalMode,
        eps: f64,
    ) -> Result<Vec<Vec<f64>>> {
        let (h, w, rows) = self.latent_values(img)?;
        let c = self.arch.out_channels();
        let mut out = Vec::with_capacity(points.len());
        for chunk in points.chunks(QUERY_CHUNK) {
            let plan = plan_queries(h, w, chunk, mode, eps)?;
            let vals = self.with_tape(|arch, tape, vars| {
                let latent = Latent {
                    h,
                    w,
                    rows: rows.iter().map(|r| tape.constant(r.clone())).collect(),
                };
                let y = arch.decode(tape, vars, &latent, &plan)?;
                Ok(tape.value(y).data().to_vec())
            })?;
            out.extend(
                vals.chunks(c)
                    .map(|v| v.iter().map(|y| (y + 1.0) / 2.0).collect()),
            );
        }
        Ok(out)
    }

    /// Renders the continuous image on a `round(scale h) x round(scale w)` grid.
    pub fn super_resolve(&self, img: &Image, scale: f64) -> Result<Image> {
        self.super_resolve_with(img, scale, self.arch.cfg.inr.mode, self.arch.cfg.inr.eps)
    }

    pub fn super_resolve_with(
        &self,
        img: &Image,
        scale: f64,
        mode: EvalMode,
        eps: f64,
    ) -> Result<Image> {
        let (oh, ow) = output_size(img.h, img.w, scale)?;
        let mut points = Vec::with_capacity(oh * ow);
        for i in 0..oh {
            for j in 0..ow {
                points.push(pixel_coord(oh, ow, i, j));
            }
        }
        let vals = self.eval_points(img, &points, mode, eps)?;
        Image::from_vec(
            oh,
            ow,
            self.arch.out_channels(),
            vals.into_iter().flatten().collect(),
        )
    }
}

/// Output raster size for an upscale factor.
pub fn output_size(h: usize, w: usize, scale: f64) -> Result<(usize, usize)> {
    if !(scale.is_finite() && scale >= 1.0) {
        return Err(Error::Domain(format!(
            "scale must be a finite value >= 1, got {scale}"
        )));
    }
    let oh = (scale * h as f64).round() as usize;
    let ow = (scale * w as f64).round() as usize;
    Ok((oh.max(h), ow.max(w)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lift_origin_and_norms() {
        let g = RotationGroup::new(8).unwrap();
        assert!(lift_coordinate([0.0, 0.0], &g)
            .iter()
            .all(|v| *v == [0.0, 0.0]));
        for v in lift_coordinate([0.3, -0.8], &g) {
            assert!((v[0].hypot(v[1]) - 0.3f64.hypot(0.8)).abs() <= 1e-15);
        }
    }

    #[test]
    fn nearest_tie_goes_to_lower_index() {
        // 4 columns: boundary between columns 1 and 2 at x = 0
        let plan = plan_queries(4, 4, &[[0.0, 0.0]], EvalMode::Nearest, 0.0).unwrap();
        assert_eq!(plan.pix, vec![4 + 1]);
        assert_eq!(plan.offsets, vec![[1.0, -1.0]]);
    }

    #[test]
    fn ensemble_weights_sum_to_one() {
        let pts = [[0.13, -0.71], [-1.0, 1.0], [0.999, 0.2]];
        let plan = plan_queries(5, 7, &pts, EvalMode::Ensemble, 1e-7).unwrap();
        for w in plan.weights.unwrap().chunks(4) {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn points_outside_domain_rejected() {
        assert!(matches!(
            plan_queries(4, 4, &[[1.5, 0.0]], EvalMode::Nearest, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn output_size_contract() {
        assert_eq!(output_size(20, 20, 2.7).unwrap(), (54, 54));
        assert_eq!(output_size(20, 20, 2.5).unwrap(), (50, 50));
        assert!(output_size(20, 20, 0.5).is_err());
    }
}
