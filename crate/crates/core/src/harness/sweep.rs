//! Grids of equivariance measurements written as CSV.

use std::io::Write;

use serde::Serialize;

use crate::data::{gen_synthetic, DatasetSpec};
use crate::encoder::Variant;
use crate::error::{Error, Result};
use crate::inr::{InrKind, InrModel, ModelConfig};

use super::equiv::{equivariance_error, EquivEntry};
use super::metrics::mean_std;

pub const CSV_HEADER: &str =
    "model,variant,t,angle_rad,scale,resolution,seed_count,nmse_mean,nmse_std,nmae_mean,nmae_std";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub model: String,
    pub variant: String,
    pub t: usize,
    pub angle_rad: f64,
    pub scale: f64,
    pub resolution: usize,
    pub seed_count: usize,
    pub nmse_mean: f64,
    pub nmse_std: f64,
    pub nmae_mean: f64,
    pub nmae_std: f64,
}

#[derive(Debug, Clone)]
pub struct SweepGrid {
    pub kinds: Vec<InrKind>,
    pub variants: Vec<Variant>,
    pub groups: Vec<usize>,
    pub angles: Vec<f64>,
    pub scales: Vec<f64>,
    pub resolutions: Vec<usize>,
    pub seeds: usize,
    pub eps: f64,
    pub mask: Option<bool>,
    /// Test images: image `s` of this corpus, regenerated at each resolution.
    pub data: DatasetSpec,
    /// Widths and depths; `t`, kind and variant are set per grid point.
    pub template: ModelConfig,
}

/// Random models are seeded per image; a fixed model is evaluated as is.
pub enum ModelSource<'a> {
    Random,
    Fixed(&'a InrModel),
}

/// One grid point and seed, passed to the per-case callback.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub model: InrKind,
    pub variant: Variant,
    pub t: usize,
    pub angle: f64,
    pub scale: f64,
    pub resolution: usize,
    pub seed: usize,
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Plain => "plain",
        Variant::Equivariant => "equivariant",
    }
}

fn nonempty<T>(v: &[T], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Config(format!("sweep grid has no {what}")));
    }
    Ok(())
}

impl SweepGrid {
    fn validate(&self, source: &ModelSource) -> Result<()> {
        nonempty(&self.angles, "angles")?;
        nonempty(&self.scales, "scales")?;
        nonempty(&self.resolutions, "resolutions")?;
        if self.seeds == 0 {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        if let ModelSource::Random = source {
            nonempty(&self.kinds, "models")?;
            nonempty(&self.variants, "variants")?;
            nonempty(&self.groups, "groups")?;
        }
        Ok(())
    }

    /// `(kind, variant, t, config)` in row order. Plain models appear once
    /// per kind, with the channel budget of the first group.
    fn models(&self) -> Vec<(InrKind, Variant, ModelConfig)> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            for &variant in &self.variants {
                let mut base = self.template.clone();
                base.inr.kind = kind;
                match variant {
                    Variant::Equivariant => {
                        for &t in &self.groups {
                            out.push((kind, variant, base.for_group(t)));
                        }
                    }
                    Variant::Plain => {
                        let eq = base.for_group(self.groups[0]);
                        out.push((kind, variant, eq.plain_counterpart()));
                    }
                }
            }
        }
        out
    }

    fn image(&self, resolution: usize, seed: usize) -> Result<crate::group::Image> {
        let spec = DatasetSpec {
            size: resolution,
            count: self.seeds,
            scale_min: 1.0,
            scale_max: 1.0,
            ..self.data.clone()
        };
        gen_synthetic(&spec, seed)
    }
}

/// Runs the grid; rows come out in `model, variant, t, angle, scale,
/// resolution` order.
pub fn sweep(grid: &SweepGrid, source: ModelSource) -> Result<Vec<SweepRow>> {
    sweep_with(grid, source, |_, _| Ok(()))
}

/// [`sweep`] with a callback receiving every individual measurement.
pub fn sweep_with(
    grid: &SweepGrid,
    source: ModelSource,
    mut on_case: impl FnMut(&Case, &EquivEntry) -> Result<()>,
) -> Result<Vec<SweepRow>> {
    grid.validate(&source)?;
    let models: Vec<(InrKind, Variant, ModelConfig)> = match source {
        ModelSource::Random => grid.models(),
        ModelSource::Fixed(m) => vec![(
            m.config().inr.kind,
            m.config().encoder.variant,
            m.config().clone(),
        )],
    };
    let mut rows = Vec::new();
    for (kind, variant, cfg) in models {
        let t = cfg.t();
        // one model per seed, built once for the whole angle/scale sub-grid
        let instances: Vec<InrModel> = match source {
            ModelSource::Random => (0..grid.seeds)
                .map(|s| InrModel::new(cfg.clone(), s as u64))
                .collect::<Result<_>>()?,
            ModelSource::Fixed(m) => vec![m.clone()],
        };
        for &angle in &grid.angles {
            for &scale in &grid.scales {
                for &resolution in &grid.resolutions {
                    let mut e2 = Vec::with_capacity(grid.seeds);
                    let mut e1 = Vec::with_capacity(grid.seeds);
                    for seed in 0..grid.seeds {
                        let model = &instances[seed.min(instances.len() - 1)];
                        let img = grid.image(resolution, seed)?;
                        let entry =
                            equivariance_error(model, &img, angle, scale, grid.eps, grid.mask)?;
                        let case = Case {
                            model: kind,
                            variant,
                            t,
                            angle,
                            scale,
                            resolution,
                            seed,
                        };
                        on_case(&case, &entry)?;
                        e2.push(entry.nmse);
                        e1.push(entry.nmae);
                    }
                    let (nmse_mean, nmse_std) = mean_std(&e2);
                    let (nmae_mean, nmae_std) = mean_std(&e1);
                    rows.push(SweepRow {
                        model: kind.name().to_string(),
                        variant: variant_name(variant).to_string(),
                        t,
                        angle_rad: angle,
                        scale,
                        resolution,
                        seed_count: grid.seeds,
                        nmse_mean,
                        nmse_std,
                        nmae_mean,
                        nmae_std,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Writes the version comment line, the header and one line per row.
pub fn write_csv(rows: &[SweepRow], out: &mut impl Write) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<sweep csv>", e);
    writeln!(out, "# equisr {}", env!("CARGO_PKG_VERSION")).map_err(io)?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))
        .map_err(|e| Error::io("<sweep csv>", e.into()))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::io("<sweep csv>", e.into()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<sweep csv>", e.into_error()))?;
    out.write_all(&bytes).map_err(io)
}

pub fn csv_string(rows: &[SweepRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}
