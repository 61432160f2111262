//! Central finite-difference verification of tape gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step, in `[1e-7, 1e-3]`.
    pub step: f64,
    /// Above this many coordinates a seeded subset of this size is checked.
    pub max_coords: usize,
    pub seed: u64,
    /// Relu pre-activations closer than `kink_factor * step` to zero mark a kink.
    pub kink_factor: f64,
    /// Lower bound on the relative-error denominator.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: 10_000,
            seed: 0,
            kink_factor: 10.0,
            abs_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped: usize,
    /// `(input, coordinate)` of the worst agreement.
    pub worst: Option<(usize, usize)>,
}

struct Eval {
    value: f64,
    relu: Vec<Tensor>,
}

fn evaluate<F>(f: &F, inputs: &[Tensor], grad: bool) -> Result<(Eval, Option<Vec<Tensor>>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), grad)).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out).item()?;
    if !value.is_finite() {
        return Err(Error::Evaluation("function value is not finite".into()));
    }
    let relu = tape
        .relu_inputs()
        .iter()
        .map(|&v| tape.value(v).clone())
        .collect();
    let grads = if grad {
        let mut g = tape.backward(out)?;
        Some(
            vars.iter()
                .zip(inputs)
                .map(|(&v, t)| g.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
                .collect(),
        )
    } else {
        None
    };
    Ok((Eval { value, relu }, grads))
}

/// Compares the tape gradient of a scalar function with central differences.
///
/// A coordinate is skipped when perturbing it moves a relu pre-activation
/// that lies within `kink_factor * step` of zero or flips its sign.
pub fn check_gradients<F>(f: F, inputs: &[Tensor], cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&cfg.step) {
        return Err(Error::Contract(format!(
            "step {} outside [1e-7, 1e-3]",
            cfg.step
        )));
    }
    let (base, grads) = evaluate(&f, inputs, true)?;
    let grads = grads.expect("requested");

    let total: usize = inputs.iter().map(Tensor::len).sum();
    let coords: Vec<usize> = if total > cfg.max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut picked = rand::seq::index::sample(&mut rng, total, cfg.max_coords).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..total).collect()
    };

    let kink = cfg.kink_factor * cfg.step;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        skipped: 0,
        worst: None,
    };
    let mut work = inputs.to_vec();
    for flat in coords {
        let (which, coord) = locate(inputs, flat);
        let orig = work[which].data()[coord];
        work[which].data_mut()[coord] = orig + cfg.step;
        let (plus, _) = evaluate(&f, &work, false)?;
        work[which].data_mut()[coord] = orig - cfg.step;
        let (minus, _) = evaluate(&f, &work, false)?;
        work[which].data_mut()[coord] = orig;

        if crosses_kink(&base, &plus, &minus, kink) {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus.value - minus.value) / (2.0 * cfg.step);
        let analytic = grads[which].data()[coord];
        let denom = analytic.abs().max(numeric.abs()).max(cfg.abs_floor);
        let rel = (analytic - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.max_rel_err || report.worst.is_none() {
            report.max_rel_err = report.max_rel_err.max(rel);
            report.worst = Some((which, coord));
        }
    }
    Ok(report)
}

fn locate(inputs: &[Tensor], mut flat: usize) -> (usize, usize) {
    for (i, t) in inputs.iter().enumerate() {
        if flat < t.len() {
            return (i, flat);
        }
        flat -= t.len();
    }
    unreachable!("coordinate beyond the inputs")
}

fn crosses_kink(base: &Eval, plus: &Eval, minus: &Eval, kink: f64) -> bool {
    for (b, (p, m)) in base.relu.iter().zip(plus.relu.iter().zip(&minus.relu)) {
        for ((&bv, &pv), &mv) in b.data().iter().zip(p.data()).zip(m.data()) {
            if pv == bv && mv == bv {
                continue;
            }
            let near = bv.abs().min(pv.abs()).min(mv.abs()) < kink;
            let flips = (pv > 0.0) != (bv > 0.0) || (mv > 0.0) != (bv > 0.0);
            if near || flips {
                return true;
            }
        }
    }
    false
}
