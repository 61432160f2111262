//! Mini-EDSR feature encoders: head conv, residual blocks (conv, relu, conv,
//! skip), tail conv and a global skip from the head output.
//!
//! The equivariant variant lifts with the head and uses group convolutions
//! everywhere else; the plain variant is the same network with `t = 1`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Padding, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::filter::{conv_layer, RotatedBasis};
use crate::group::{GroupFeatureMap, Image, RotationGroup};
use crate::params::{he_uniform, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Plain,
    Equivariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub variant: Variant,
    /// Group order; must be 1 for the plain variant.
    pub t: usize,
    pub blocks: usize,
    /// Channels per group slot.
    pub n: usize,
    /// Filter size (odd).
    pub p: usize,
    pub c_in: usize,
    pub bias: bool,
}

impl EncoderConfig {
    /// Desk-scale equivariant encoder: 4 blocks, 32 channels in total, 5x5 filters.
    pub fn desk(t: usize) -> Self {
        Self {
            variant: Variant::Equivariant,
            t,
            blocks: 4,
            n: (32 / t).max(1),
            p: 5,
            c_in: 3,
            bias: true,
        }
    }

    /// Plain network with the same total channel budget.
    pub fn plain_counterpart(&self) -> Self {
        Self {
            variant: Variant::Plain,
            t: 1,
            n: self.n * self.t,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant == Variant::Plain && self.t != 1 {
            return Err(Error::Config(format!(
                "plain encoder needs t = 1, got {}",
                self.t
            )));
        }
        if self.t == 0 || self.blocks == 0 || self.n == 0 || self.c_in == 0 {
            return Err(Error::Config(
                "encoder t, blocks, n and c_in must be positive".into(),
            ));
        }
        if self.p % 2 == 0 {
            return Err(Error::Config(format!(
                "filter size must be odd, got {}",
                self.p
            )));
        }
        Ok(())
    }

    /// Output channels `n * t`.
    pub fn width(&self) -> usize {
        self.n * self.t
    }

    /// Number of filter coefficients, biases excluded.
    pub fn conv_weight_count(&self) -> usize {
        let pp = self.p * self.p;
        let head = self.n * self.c_in * pp;
        let inner = self.n * self.t * self.n * pp;
        head + (2 * self.blocks + 1) * inner
    }

    pub fn param_count(&self) -> usize {
        let biases = if self.bias {
            (2 * self.blocks + 2) * self.n
        } else {
            0
        };
        self.conv_weight_count() + biases
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
    group: RotationGroup,
    bank: Arc<RotatedBasis>,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let group = RotationGroup::new(cfg.t)?;
        let bank = RotatedBasis::cached(cfg.p, &group)?;
        Ok(Self { cfg, group, bank })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn group(&self) -> &RotationGroup {
        &self.group
    }

    fn layer_shapes(&self) -> Vec<(String, [usize; 5])> {
        let EncoderConfig { t, n, p, c_in, .. } = self.cfg;
        let mut v = vec![("head".to_string(), [n, 1, c_in, p, p])];
        for b in 0..self.cfg.blocks {
            v.push((format!("block{b}.conv1"), [n, t, n, p, p]));
            v.push((format!("block{b}.conv2"), [n, t, n, p, p]));
        }
        v.push(("tail".to_string(), [n, t, n, p, p]));
        v
    }

    /// Appends freshly initialized parameters under `prefix`.
    pub fn init_into(&self, set: &mut ParamSet, prefix: &str, rng: &mut ChaCha8Rng) -> Result<()> {
        for (name, shape) in self.layer_shapes() {
            let fan_in = shape[1] * shape[2] * shape[3] * shape[4];
            set.push(format!("{prefix}{name}.w"), he_uniform(rng, &shape, fan_in))?;
            if self.cfg.bias {
                set.push(format!("{prefix}{name}.b"), Tensor::zeros(&[shape[0]]))?;
            }
        }
        Ok(())
    }

    /// Number of parameter arrays consumed by [`Encoder::forward`].
    pub fn param_arrays(&self) -> usize {
        let layers = 2 * self.cfg.blocks + 2;
        if self.cfg.bias {
            2 * layers
        } else {
            layers
        }
    }

    /// `x` is a `[c_in, h, w]` image; returns `[n * t, h, w]` with channel
    /// `c * t + k` holding slot `k` of channel `c`.
    pub fn forward(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Result<Var> {
        if vars.len() != self.param_arrays() {
            return Err(Error::shape(format!(
                "encoder needs {} parameter arrays, got {}",
                self.param_arrays(),
                vars.len()
            )));
        }
        let c = tape.value(x).shape().first().copied().unwrap_or(0);
        if tape.value(x).rank() != 3 || c != self.cfg.c_in {
            return Err(Error::shape(format!(
                "encoder expects [{}, h, w] input, got {:?}",
                self.cfg.c_in,
                tape.value(x).shape()
            )));
        }
        let mut next = vars.iter().copied();
        let bias = self.cfg.bias;
        let mut layer = |tape: &mut Tape, input: Var| -> Result<Var> {
            let w = next.next().expect("counted");
            let b = if bias { next.next() } else { None };
            conv_layer(tape, input, w, b, &self.bank, Padding::Same)
        };
        let head = layer(tape, x)?;
        let mut h = head;
        for _ in 0..self.cfg.blocks {
            let a = layer(tape, h)?;
            let a = tape.relu(a)?;
            let a = layer(tape, a)?;
            h = tape.add(h, a)?;
        }
        let tail = layer(tape, h)?;
        tape.add(tail, head)
    }

    /// Encodes one image with the given parameters.
    pub fn encode(&self, params: &[Tensor], img: &Image) -> Result<GroupFeatureMap> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
        let x = tape.constant(Tensor::new(vec![img.c, img.h, img.w], img.to_chw())?);
        let y = self.forward(&mut tape, &vars, x)?;
        GroupFeatureMap::from_chw(img.h, img.w, self.cfg.n, self.cfg.t, tape.value(y).data())
    }
}

/// Builds an encoder and its seeded parameters.
pub fn build_encoder(cfg: EncoderConfig, seed: u64) -> Result<(Encoder, ParamSet)> {
    let enc = Encoder::new(cfg)?;
    let mut set = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    enc.init_into(&mut set, "", &mut rng)?;
    Ok((enc, set))
}

/// Convenience wrapper around [`Encoder::encode`] for a whole [`ParamSet`].
pub fn encode(enc: &Encoder, params: &ParamSet, img: &Image) -> Result<GroupFeatureMap> {
    let tensors: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    enc.encode(&tensors, img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(blocks: usize, n: usize, p: usize, bias: bool) -> EncoderConfig {
        EncoderConfig {
            variant: Variant::Plain,
            t: 1,
            blocks,
            n,
            p,
            c_in: 3,
            bias,
        }
    }

    #[test]
    fn parameter_count_by_hand() {
        let cfg = plain(1, 8, 3, false);
        let (_, params) = build_encoder(cfg.clone(), 0).unwrap();
        let want = 3 * 8 * 9 + 2 * (8 * 8 * 9) + 8 * 8 * 9;
        assert_eq!(params.count(), want);
        assert_eq!(cfg.conv_weight_count(), want);
        let with_bias = plain(1, 8, 3, true);
        assert_eq!(
            build_encoder(with_bias.clone(), 0).unwrap().1.count(),
            want + 4 * 8
        );
        assert_eq!(with_bias.param_count(), want + 4 * 8);
    }

    #[test]
    fn plain_with_group_order_rejected() {
        let mut cfg = plain(1, 8, 3, true);
        cfg.t = 4;
        assert!(matches!(build_encoder(cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn channel_budget_matches() {
        let eq = EncoderConfig {
            n: 2,
            ..EncoderConfig::desk(4)
        };
        assert_eq!(eq.width(), eq.plain_counterpart().width());
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_encoder(EncoderConfig::desk(4), 7).unwrap().1;
        let b = build_encoder(EncoderConfig::desk(4), 7).unwrap().1;
        assert_eq!(a, b);
    }

    #[test]
    fn zero_image_bias_free_gives_zero() {
        let mut cfg = EncoderConfig::desk(4);
        cfg.bias = false;
        cfg.blocks = 1;
        let (enc, params) = build_encoder(cfg, 1).unwrap();
        let out = encode(&enc, &params, &Image::zeros(6, 6, 3)).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
        assert_eq!((out.h, out.w, out.n, out.t), (6, 6, 8, 4));
    }
}
