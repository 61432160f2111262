//! L1 training on sampled patch pairs with Adam and step-wise decay.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::data::{sample_patch_pairs, write_atomic, DatasetSpec, PatchPair};
use crate::error::{Error, Result};
use crate::inr::{normalize, plan_queries, Architecture, InrModel, ModelConfig};
use crate::params::ParamSet;

use super::adam::{adam_step, Adam, AdamConfig};
use super::checkpoint::save_checkpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// The learning rate halves every `decay_steps` steps.
    pub decay_steps: usize,
    pub batch: usize,
    /// LR patch side.
    pub patch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            lr: 1e-4,
            decay_steps: 500,
            batch: 4,
            patch: 24,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch == 0 || self.patch == 0 || self.decay_steps == 0 {
            return Err(Error::Config(
                "steps, batch, patch and decay_steps must be positive".into(),
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }

    /// Learning rate used at (zero-based) `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr * 0.5f64.powi((step / self.decay_steps) as i32)
    }

    /// Seed of the patch batch drawn at `step`.
    pub fn batch_seed(&self, step: usize) -> u64 {
        self.seed ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// Parameters, optimizer moments and loss history of a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub step: usize,
    pub params: ParamSet,
    pub adam: Adam,
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
    pub seed: u64,
}

impl TrainState {
    pub fn new(params: ParamSet, seed: u64) -> Self {
        let adam = Adam::new(&params, AdamConfig::default());
        Self {
            step: 0,
            params,
            adam,
            losses: Vec::new(),
            lrs: Vec::new(),
            seed,
        }
    }
}

/// Mean absolute error in pixel units over all query pixels of the batch.
pub fn batch_loss(
    arch: &Architecture,
    tape: &mut Tape,
    vars: &[Var],
    pairs: &[PatchPair],
) -> Result<Var> {
    let c = arch.out_channels();
    let total: usize = pairs.iter().map(|p| p.targets.len()).sum();
    let mut acc: Option<Var> = None;
    for p in pairs {
        let x = tape.constant(Tensor::new(
            vec![p.lr.c, p.lr.h, p.lr.w],
            normalize(&p.lr).to_chw(),
        )?);
        let latent = arch.latent(tape, vars, x)?;
        let inr = &arch.config().inr;
        let plan = plan_queries(p.lr.h, p.lr.w, &p.coords, inr.mode, inr.eps)?;
        let y = arch.decode(tape, vars, &latent, &plan)?;
        let target: Vec<f64> = p.targets.iter().map(|v| 2.0 * v - 1.0).collect();
        let target = tape.constant(Tensor::new(vec![p.coords.len(), c], target)?);
        let d = tape.sub(y, target)?;
        let neg = tape.scale(d, -1.0)?;
        let pos = tape.relu(d)?;
        let neg = tape.relu(neg)?;
        let abs = tape.add(pos, neg)?;
        let s = tape.sum_all(abs)?;
        acc = Some(match acc {
            None => s,
            Some(a) => tape.add(a, s)?,
        });
    }
    let acc = acc.ok_or_else(|| Error::Config("empty training batch".into()))?;
    // the network works on [-1, 1]; halve to report pixel units
    tape.scale(acc, 0.5 / total as f64)
}

/// One optimizer step on a freshly sampled batch; returns the loss.
pub fn train_step(
    arch: &Architecture,
    state: &mut TrainState,
    data: &DatasetSpec,
    tc: &TrainConfig,
) -> Result<f64> {
    let step = state.step;
    let pairs = sample_patch_pairs(data, tc.patch, tc.batch, tc.batch_seed(step))?;
    let mut tape = Tape::new();
    let vars = state.params.record(&mut tape, true);
    let loss = batch_loss(arch, &mut tape, &vars, &pairs).map_err(|e| match e {
        Error::Evaluation(what) => Error::NonFinite { step, what },
        other => other,
    })?;
    let value = tape.value(loss).item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            step,
            what: "loss".into(),
        });
    }
    let mut grads = tape.backward(loss)?;
    let grads: Vec<Tensor> = vars
        .iter()
        .map(|&v| grads.take(v).expect("every parameter is a leaf"))
        .collect();
    if grads.iter().any(|g| !g.all_finite()) {
        return Err(Error::NonFinite {
            step,
            what: "gradient".into(),
        });
    }
    let lr = tc.lr_at(step);
    adam_step(&mut state.params, &mut state.adam, &grads, lr)?;
    state.step += 1;
    state.losses.push(value);
    state.lrs.push(lr);
    Ok(value)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: InrModel,
    pub losses: Vec<f64>,
    pub lrs: Vec<f64>,
}

/// Trains from the seeded initialization of `cfg`.
pub fn train(cfg: &ModelConfig, data: &DatasetSpec, tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    data.validate()?;
    if data.channels != cfg.encoder.c_in {
        return Err(Error::Config(format!(
            "dataset has {} channels, model expects {}",
            data.channels, cfg.encoder.c_in
        )));
    }
    let arch = Architecture::new(cfg.clone())?;
    let mut state = TrainState::new(arch.init_params(tc.seed)?, tc.seed);
    for _ in 0..tc.steps {
        train_step(&arch, &mut state, data, tc)?;
    }
    Ok(TrainOutcome {
        model: InrModel {
            arch,
            params: state.params,
        },
        losses: state.losses,
        lrs: state.lrs,
    })
}

pub fn loss_log_csv(losses: &[f64], lrs: &[f64]) -> String {
    let mut s = format!("# equisr {}\nstep,loss,lr\n", env!("CARGO_PKG_VERSION"));
    for (i, (l, r)) in losses.iter().zip(lrs).enumerate() {
        s.push_str(&format!("{},{l},{r}\n", i + 1));
    }
    s
}

/// Trains and writes `model.json` (+ `model.bin`) and `loss.csv` into `dir`.
pub fn train_to_dir(
    cfg: &ModelConfig,
    data: &DatasetSpec,
    tc: &TrainConfig,
    dir: &Path,
) -> Result<TrainOutcome> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let out = train(cfg, data, tc)?;
    save_checkpoint(&dir.join("model.json"), cfg, &out.model.params)?;
    write_atomic(
        &dir.join("loss.csv"),
        loss_log_csv(&out.losses, &out.lrs).as_bytes(),
    )?;
    Ok(out)
}

/// Trailing moving average over `window` steps.
pub fn smoothed(losses: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..losses.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let s = &losses[lo..=i];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}
