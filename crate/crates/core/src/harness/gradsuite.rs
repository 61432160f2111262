//! Finite-difference gradient checks over every primitive and composite layer.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    check_gradients, GradCheckConfig, GradCheckReport, Padding, Tape, Tensor, Var,
};
use crate::data::{sample_patch_pairs, DatasetKind, DatasetSpec};
use crate::encoder::{Encoder, EncoderConfig, Variant};
use crate::error::{Error, Result};
use crate::filter::{conv_layer, RotatedBasis};
use crate::group::RotationGroup;
use crate::inr::{plan_queries, Architecture, EvalMode, InrConfig, InrKind, ModelConfig};
use crate::params::ParamSet;

use super::train::batch_loss;

/// Module names accepted by [`gradient_suite`].
pub const GRAD_MODULES: [&str; 5] = ["primitives", "filter", "encoder", "inr", "loss"];
pub const GRAD_TOL: f64 = 1e-4;
/// Seeds used when none are given.
pub const GRAD_SEEDS: [u64; 3] = [0, 1, 2];

/// Coordinates checked per composite case.
const COMPOSITE_COORDS: usize = 120;

#[derive(Debug, Clone)]
pub struct GradCase {
    pub module: &'static str,
    pub name: String,
    pub seed: u64,
    pub report: GradCheckReport,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.report.max_rel_err <= GRAD_TOL && self.report.checked > 0
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(lo..hi)).collect(),
    )
    .expect("shape")
}

/// Reduces `y` to a scalar through a fixed random projection.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let r = uniform(&mut rng, &tape.value(y).shape().to_vec(), -1.0, 1.0);
    let r = tape.constant(r);
    let p = tape.mul(y, r)?;
    tape.sum_all(p)
}

struct Runner<'a> {
    module: &'static str,
    seed: u64,
    cfg: GradCheckConfig,
    out: &'a mut Vec<GradCase>,
}

impl Runner<'_> {
    fn run<F>(&mut self, name: &str, inputs: &[Tensor], f: F) -> Result<()>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let seed = self.seed;
        let report = check_gradients(
            |tape, v| {
                let y = f(tape, v)?;
                project(tape, y, seed)
            },
            inputs,
            &self.cfg,
        )?;
        self.out.push(GradCase {
            module: self.module,
            name: name.to_string(),
            seed,
            report,
        });
        Ok(())
    }
}

fn primitives(r: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    let mut u = |shape: &[usize]| uniform(rng, shape, -1.0, 1.0);
    let (a, b) = (u(&[3, 4]), u(&[3, 4]));
    r.run("add", &[a.clone(), b.clone()], |t, v| t.add(v[0], v[1]))?;
    r.run("sub", &[a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]))?;
    r.run("mul", &[a.clone(), b], |t, v| t.mul(v[0], v[1]))?;
    r.run("matmul", &[a.clone(), u(&[4, 5])], |t, v| {
        t.matmul(v[0], v[1])
    })?;
    r.run("matmul (vector)", &[a.clone(), u(&[4])], |t, v| {
        t.matmul(v[0], v[1])
    })?;
    let (x, k) = (u(&[2, 6, 5]), u(&[3, 2, 3, 3]));
    r.run("conv2d valid", &[x.clone(), k.clone()], |t, v| {
        t.conv2d(v[0], v[1], Padding::Valid)
    })?;
    r.run("conv2d same", &[x, k], |t, v| {
        t.conv2d(v[0], v[1], Padding::Same)
    })?;
    r.run("relu", &[u(&[5, 6])], |t, v| t.relu(v[0]))?;
    r.run("sin", &[a.clone()], |t, v| t.sin(v[0]))?;
    r.run("cos", &[a.clone()], |t, v| t.cos(v[0]))?;
    r.run("concat axis 0", &[a.clone(), u(&[2, 4])], |t, v| {
        t.concat(v, 0)
    })?;
    r.run("concat axis 1", &[a.clone(), u(&[3, 2])], |t, v| {
        t.concat(v, 1)
    })?;
    r.run("sum axes", &[u(&[2, 3, 4])], |t, v| t.sum(v[0], &[0, 2]))?;
    r.run("sum all", &[a.clone()], |t, v| t.sum_all(v[0]))?;
    r.run("scale", &[a.clone()], |t, v| t.scale(v[0], -2.5))?;
    // repeated indices exercise scatter-add in the adjoint
    let index = Arc::new(vec![0, 5, 5, 11, 2, 0]);
    r.run("gather", &[a.clone()], move |t, v| {
        t.gather(v[0], &[2, 3], index.clone())
    })?;
    r.run("reshape", &[a], |t, v| t.reshape(v[0], &[2, 6]))
}

fn filter_layers(r: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    // (t, t_in, p): lifting, right-angle group conv, masked group conv
    for &(t, t_in, p) in &[(4usize, 1usize, 3usize), (4, 4, 3), (8, 8, 5), (1, 1, 3)] {
        let bank = RotatedBasis::cached(p, &RotationGroup::new(t)?)?;
        let (c_in, c_out) = (2, 2);
        let x = uniform(rng, &[c_in * t_in, 6, 6], -1.0, 1.0);
        let coeffs = uniform(rng, &[c_out, t_in, c_in, p, p], -0.5, 0.5);
        let bias = uniform(rng, &[c_out], -0.5, 0.5);
        let name = match (t, t_in) {
            (1, _) => format!("plain conv p={p}"),
            (_, 1) => format!("lifting conv t={t} p={p}"),
            _ => format!("group conv t={t} p={p}"),
        };
        let b2 = bank.clone();
        r.run(&name, &[x.clone(), coeffs.clone(), bias], move |tape, v| {
            conv_layer(tape, v[0], v[1], Some(v[2]), &b2, Padding::Same)
        })?;
        r.run(
            &format!("{name} valid, no bias"),
            &[x, coeffs],
            move |tape, v| conv_layer(tape, v[0], v[1], None, &bank, Padding::Valid),
        )?;
    }
    Ok(())
}

/// Perturbs every parameter so zero-initialized biases are exercised too.
fn jitter(set: &ParamSet, rng: &mut ChaCha8Rng) -> Vec<Tensor> {
    set.iter()
        .map(|(_, t)| {
            let mut t = t.clone();
            for v in t.data_mut() {
                *v += rng.gen_range(-0.1..0.1);
            }
            t
        })
        .collect()
}

fn small_encoder(variant: Variant, t: usize) -> EncoderConfig {
    EncoderConfig {
        variant,
        t,
        blocks: 1,
        n: 2,
        p: 3,
        c_in: 3,
        bias: true,
    }
}

fn encoder(r: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    for (variant, t) in [(Variant::Equivariant, 4), (Variant::Plain, 1)] {
        let enc = Encoder::new(small_encoder(variant, t))?;
        let mut set = ParamSet::new();
        enc.init_into(&mut set, "enc", rng)?;
        let mut inputs = jitter(&set, rng);
        inputs.push(uniform(rng, &[3, 5, 5], -1.0, 1.0));
        let n = set.len();
        r.run(&format!("encoder {variant:?} t={t}"), &inputs, |tape, v| {
            enc.forward(tape, &v[..n], v[n])
        })?;
    }
    Ok(())
}

fn small_model(kind: InrKind, t: usize, mode: EvalMode) -> ModelConfig {
    let mut inr = InrConfig::desk(kind, t);
    inr.widths = vec![2, 4, 3];
    inr.layers = if kind == InrKind::Ope { 0 } else { 1 };
    inr.k_max = 1;
    inr.k_lte = 2;
    inr.mode = mode;
    ModelConfig {
        encoder: small_encoder(Variant::Equivariant, t),
        inr,
    }
}

fn inr(r: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    let (h, w) = (4, 4);
    let points: Vec<[f64; 2]> = (0..5)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    for kind in [InrKind::Liif, InrKind::Ope, InrKind::Lte] {
        for mode in [EvalMode::Nearest, EvalMode::Ensemble] {
            let arch = Architecture::new(small_model(kind, 4, mode))?;
            let set = arch.init_params(rng.gen())?;
            let mut inputs = jitter(&set, rng);
            inputs.push(uniform(rng, &[3, h, w], -1.0, 1.0));
            let plan = plan_queries(h, w, &points, mode, arch.config().inr.eps)?;
            let n = set.len();
            r.run(&format!("{} {mode:?}", kind.name()), &inputs, |tape, v| {
                let latent = arch.latent(tape, &v[..n], v[n])?;
                arch.decode(tape, &v[..n], &latent, &plan)
            })?;
        }
    }
    Ok(())
}

fn loss(r: &mut Runner, rng: &mut ChaCha8Rng) -> Result<()> {
    let arch = Architecture::new(small_model(InrKind::Liif, 4, EvalMode::Ensemble))?;
    let set = arch.init_params(rng.gen())?;
    let inputs = jitter(&set, rng);
    let data = DatasetSpec {
        kind: DatasetKind::Stripes,
        count: 2,
        size: 16,
        ..Default::default()
    };
    let pairs = sample_patch_pairs(&data, 4, 2, rng.gen())?;
    r.run("l1 batch loss", &inputs, |tape, v| {
        batch_loss(&arch, tape, v, &pairs)
    })
}

/// Runs the checks of one module (or all of them) for each seed.
pub fn gradient_suite(module: Option<&str>, seeds: &[u64]) -> Result<Vec<GradCase>> {
    let modules: Vec<&'static str> = match module {
        None => GRAD_MODULES.to_vec(),
        Some(m) => vec![*GRAD_MODULES.iter().find(|&&n| n == m).ok_or_else(|| {
            Error::Config(format!(
                "unknown module `{m}`; expected one of {}",
                GRAD_MODULES.join(", ")
            ))
        })?],
    };
    let mut out = Vec::new();
    for &seed in seeds {
        for &m in &modules {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cfg = GradCheckConfig {
                seed,
                max_coords: if m == "primitives" {
                    10_000
                } else {
                    COMPOSITE_COORDS
                },
                ..Default::default()
            };
            let mut runner = Runner {
                module: m,
                seed,
                cfg,
                out: &mut out,
            };
            match m {
                "primitives" => primitives(&mut runner, &mut rng)?,
                "filter" => filter_layers(&mut runner, &mut rng)?,
                "encoder" => encoder(&mut runner, &mut rng)?,
                "inr" => inr(&mut runner, &mut rng)?,
                "loss" => loss(&mut runner, &mut rng)?,
                _ => unreachable!("checked above"),
            }
        }
    }
    Ok(out)
}
