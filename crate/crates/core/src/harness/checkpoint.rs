//! Checkpoints: a JSON manifest plus one little-endian `f64` blob.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::write_atomic;
use crate::error::{Error, Result};
use crate::inr::{InrModel, ModelConfig};
use crate::params::ParamSet;

pub const CKPT_VERSION: &str = "equisr-ckpt-1";
const DTYPE: &str = "f64-le";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: String,
    config: ModelConfig,
    /// Blob file name, relative to the manifest.
    blob: String,
    blob_bytes: usize,
    params: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
}

/// Blob path for a manifest path: same stem, `.bin` extension.
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, params: &ParamSet) -> Result<()> {
    let mut blob = Vec::with_capacity(params.count() * 8);
    let mut entries = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        entries.push(Entry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: DTYPE.to_string(),
            offset: blob.len(),
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let bpath = blob_path(path);
    let manifest = Manifest {
        version: CKPT_VERSION.to_string(),
        config: cfg.clone(),
        blob: bpath
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        blob_bytes: blob.len(),
        params: entries,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&bpath, &blob)?;
    write_atomic(path, &json)
}

fn bad(path: &Path, field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{}: field `{field}`: {msg}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<InrModel> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_slice(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: malformed manifest: {e}", path.display())))?;
    if manifest.version != CKPT_VERSION {
        return Err(bad(
            path,
            "version",
            format!("expected {CKPT_VERSION}, found {}", manifest.version),
        ));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let bpath = dir.join(&manifest.blob);
    let blob = std::fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    if blob.len() != manifest.blob_bytes {
        return Err(bad(
            path,
            "blob_bytes",
            format!(
                "manifest says {}, blob has {}",
                manifest.blob_bytes,
                blob.len()
            ),
        ));
    }
    let mut params = ParamSet::new();
    let mut expected = 0;
    for (i, e) in manifest.params.iter().enumerate() {
        if e.dtype != DTYPE {
            return Err(bad(
                path,
                &format!("params[{i}].dtype"),
                format!("unsupported `{}`", e.dtype),
            ));
        }
        if e.offset != expected {
            return Err(bad(
                path,
                &format!("params[{i}].offset"),
                format!("expected {expected}, found {}", e.offset),
            ));
        }
        let n: usize = e.shape.iter().product();
        let end = e.offset + 8 * n;
        if end > blob.len() {
            return Err(bad(
                path,
                &format!("params[{i}].shape"),
                "runs past the end of the blob",
            ));
        }
        let data = blob[e.offset..end]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        params
            .push(e.name.clone(), Tensor::new(e.shape.clone(), data)?)
            .map_err(|err| bad(path, &format!("params[{i}].name"), err))?;
        expected = end;
    }
    if expected != blob.len() {
        return Err(bad(path, "params", "entries do not cover the blob"));
    }
    InrModel::with_params(manifest.config, params).map_err(|e| match e {
        Error::Checkpoint(msg) => bad(path, "params", msg),
        Error::Config(msg) => bad(path, "config", msg),
        other => other,
    })
}
