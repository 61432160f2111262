//! Run configuration files shared by the command-line tools.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::DatasetSpec;
use crate::encoder::{EncoderConfig, Variant};
use crate::error::{Error, Result};
use crate::harness::{SweepGrid, TrainConfig};
use crate::inr::{EvalMode, InrConfig, InrKind, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub data: DatasetSpec,
    pub train: TrainConfig,
    pub eval: EvalSection,
}

/// Model description. For the plain variant `t` names the equivariant
/// model whose channel budget the plain network matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub variant: Variant,
    pub t: usize,
    pub encoder: EncoderSection,
    pub inr: InrSection,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: Variant::Equivariant,
            t: 4,
            encoder: EncoderSection::default(),
            inr: InrSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderSection {
    pub blocks: usize,
    /// Channels per group slot; `null` means `32 / t`.
    pub n: Option<usize>,
    pub p: usize,
    pub bias: bool,
}

impl Default for EncoderSection {
    fn default() -> Self {
        Self {
            blocks: 4,
            n: None,
            p: 5,
            bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InrSection {
    pub kind: InrKind,
    #[serde(rename = "L")]
    pub layers: usize,
    /// `[m, out1, psi hidden...]`; `null` means `[32 / t, 32, 32]`.
    pub widths: Option<Vec<usize>>,
    pub k_max: usize,
    #[serde(rename = "K")]
    pub k_lte: usize,
    pub eps: f64,
    pub mode: EvalMode,
}

impl Default for InrSection {
    fn default() -> Self {
        let d = InrConfig::desk(InrKind::Liif, 4);
        Self {
            kind: d.kind,
            layers: d.layers,
            widths: None,
            k_max: d.k_max,
            k_lte: d.k_lte,
            eps: d.eps,
            mode: d.mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub angles_deg: Vec<f64>,
    pub scales: Vec<f64>,
    pub resolutions: Vec<usize>,
    pub seeds: usize,
    /// Restrict metrics to the inscribed disk; `null` masks exactly when
    /// some angle is not a multiple of 90 degrees.
    pub mask: Option<bool>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            angles_deg: vec![90.0, 180.0, 270.0],
            scales: vec![2.0],
            resolutions: vec![32],
            seeds: 10,
            mask: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        self.model_config()?;
        let e = &self.eval;
        if e.angles_deg.is_empty() || e.scales.is_empty() || e.resolutions.is_empty() {
            return Err(Error::Config(
                "eval needs at least one angle, scale and resolution".into(),
            ));
        }
        if e.seeds == 0 {
            return Err(Error::Config("eval needs at least one seed".into()));
        }
        if let Some(&s) = e.scales.iter().find(|&&s| !(s.is_finite() && s >= 1.0)) {
            return Err(Error::Config(format!("eval scale {s} must be >= 1")));
        }
        if e.resolutions.contains(&0) {
            return Err(Error::Config("eval resolutions must be positive".into()));
        }
        Ok(())
    }

    /// The model described by the `model` section, with `data.channels` inputs.
    pub fn model_config(&self) -> Result<ModelConfig> {
        let m = &self.model;
        if m.t == 0 {
            return Err(Error::Config("model t must be positive".into()));
        }
        let eq = ModelConfig {
            encoder: EncoderConfig {
                variant: Variant::Equivariant,
                t: m.t,
                blocks: m.encoder.blocks,
                n: m.encoder.n.unwrap_or((32 / m.t).max(1)),
                p: m.encoder.p,
                c_in: self.data.channels,
                bias: m.encoder.bias,
            },
            inr: InrConfig {
                kind: m.inr.kind,
                layers: m.inr.layers,
                widths: m
                    .inr
                    .widths
                    .clone()
                    .unwrap_or_else(|| InrConfig::desk(m.inr.kind, m.t).widths),
                k_max: m.inr.k_max,
                k_lte: m.inr.k_lte,
                eps: m.inr.eps,
                mode: m.inr.mode,
            },
        };
        let cfg = match m.variant {
            Variant::Equivariant => eq,
            Variant::Plain => eq.plain_counterpart(),
        };
        crate::inr::Architecture::new(cfg.clone())?;
        Ok(cfg)
    }

    /// Sweep over the `eval` section for the configured model.
    pub fn sweep_grid(&self) -> Result<SweepGrid> {
        let template = self.model_config()?;
        Ok(SweepGrid {
            kinds: vec![self.model.inr.kind],
            variants: vec![self.model.variant],
            groups: vec![self.model.t],
            angles: self
                .eval
                .angles_deg
                .iter()
                .map(|d| d.to_radians())
                .collect(),
            scales: self.eval.scales.clone(),
            resolutions: self.eval.resolutions.clone(),
            seeds: self.eval.seeds,
            eps: self.model.inr.eps,
            mask: self.eval.mask,
            data: self.data.clone(),
            template: match self.model.variant {
                Variant::Equivariant => template,
                // the grid derives the plain counterpart itself
                Variant::Plain => self.with_variant(Variant::Equivariant).model_config()?,
            },
        })
    }

    fn with_variant(&self, variant: Variant) -> Self {
        let mut out = self.clone();
        out.model.variant = variant;
        out
    }
}
