use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: usize,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet, cfg: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        Self {
            cfg,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut ParamSet, adam: &mut Adam, grads: &[Tensor], lr: f64) -> Result<()> {
    if grads.len() != params.len() || adam.m.len() != params.len() {
        return Err(Error::shape(format!(
            "{} gradients for {} parameter arrays",
            grads.len(),
            params.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.tensor(i).shape() {
            return Err(Error::shape(format!(
                "gradient {:?} does not match parameter `{}` {:?}",
                g.shape(),
                params.name(i),
                params.tensor(i).shape()
            )));
        }
    }
    adam.t += 1;
    let AdamConfig { beta1, beta2, eps } = adam.cfg;
    let c1 = 1.0 - beta1.powi(adam.t as i32);
    let c2 = 1.0 - beta2.powi(adam.t as i32);
    for (i, g) in grads.iter().enumerate() {
        let m = adam.m[i].data_mut();
        let v = adam.v[i].data_mut();
        let p = params.tensor_mut(i).data_mut();
        for k in 0..g.len() {
            let gk = g.data()[k];
            m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
            v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            p[k] -= lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}
