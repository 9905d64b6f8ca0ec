//! Trained-model files: a flat little-endian `f64` payload behind a shape
//! header, plus a JSON sidecar describing how the model was produced.
//!
//! ```text
//! b"AUGSMDL1"
//! u32 LE   tensor count
//! per tensor: u32 LE ndim, ndim × u64 LE dims
//! f64 LE   parameters, tensors back to back
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Architecture, Classifier, ClassifierSpec, HyperParams, LinearSoftmax, Mlp, ModelError};
use crate::augment::AugVector;

pub const MAGIC: &[u8; 8] = b"AUGSMDL1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub classifier: ClassifierSpec,
    pub hyper_params: HyperParams,
    pub seed: u64,
    pub vector: AugVector,
    pub shapes: Vec<Vec<usize>>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

pub fn encode(shapes: &[Vec<usize>], params: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for shape in shapes {
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
    }
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<(Vec<Vec<usize>>, Vec<f64>), ModelError> {
    let err = |m: &str| ModelError::Artifact(m.to_string());
    let mut cur = bytes;
    let mut take = |n: usize| -> Result<&[u8], ModelError> {
        if cur.len() < n {
            return Err(err("truncated model file"));
        }
        let (head, tail) = cur.split_at(n);
        cur = tail;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(err("bad magic"));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let count = u32_at(take(4)?);
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let ndim = u32_at(take(4)?);
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
        }
        shapes.push(shape);
    }
    let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    let payload = take(total * 8)?;
    let params = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if !cur.is_empty() {
        return Err(err("trailing bytes after parameters"));
    }
    Ok((shapes, params))
}

pub fn save_model(
    path: &Path,
    classifier: &dyn Classifier,
    manifest: &ModelManifest,
) -> Result<(), ModelError> {
    fs::write(path, encode(&classifier.shapes(), classifier.params()))?;
    let json = serde_json::to_string_pretty(manifest)
        .map_err(|e| ModelError::Artifact(e.to_string()))?;
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Loads a built-in classifier together with its manifest.
pub fn load_model(path: &Path) -> Result<(ModelManifest, Box<dyn Classifier>), ModelError> {
    let manifest: ModelManifest = serde_json::from_slice(&fs::read(sidecar_path(path))?)
        .map_err(|e| ModelError::Artifact(e.to_string()))?;
    let (shapes, params) = decode(&fs::read(path)?)?;
    if shapes != manifest.shapes {
        return Err(ModelError::Artifact("shape header disagrees with manifest".into()));
    }
    let bad_len = || ModelError::Artifact("parameter count does not match architecture".into());
    let model: Box<dyn Classifier> = match &manifest.classifier.architecture {
        Architecture::LinearSoftmax => Box::new(LinearSoftmax::from_params(params).ok_or_else(bad_len)?),
        Architecture::Mlp { hidden } => Box::new(Mlp::from_params(*hidden, params).ok_or_else(bad_len)?),
        other => return Err(ModelError::UnsupportedArchitecture(format!("{other:?}"))),
    };
    Ok((manifest, model))
}
