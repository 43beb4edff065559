//! Single-file parameter checkpoints: a JSON manifest (config echo plus
//! tensor names/shapes) followed by raw little-endian f64 payloads.
//! Save/load round-trips are bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{Model, ModelConfig};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"AVGTCKPT";

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: u32,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

/// Serialized checkpoint bytes.
pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let named = model.named_params();
    let manifest = Manifest {
        version: 1,
        config: model.config.clone(),
        tensors: named
            .iter()
            .map(|(name, t)| TensorEntry { name: name.clone(), shape: t.shape().to_vec() })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest encode: {}", e)))?;
    let mut out = Vec::with_capacity(manifest_bytes.len() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_bytes);
    for (_, t) in &named {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Atomic write: a temp file in the target directory, then rename, so a
/// killed run never leaves a truncated checkpoint under the final name.
pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Checkpoint(format!("bad checkpoint path {}", path.display())))?
        .to_string_lossy()
        .to_string();
    let tmp = path.with_file_name(format!(".{}.tmp", file_name));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {}", path.display(), e)))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a checkpoint file", path.display())));
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let payload_start = 16 + manifest_len;
    if bytes.len() < payload_start {
        return Err(Error::Checkpoint(format!("{}: truncated manifest", path.display())));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[16..payload_start])
        .map_err(|e| Error::Checkpoint(format!("{}: bad manifest: {}", path.display(), e)))?;
    if manifest.version != 1 {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported version {}",
            path.display(),
            manifest.version
        )));
    }

    // Rebuild the parameter skeleton from the config, then overwrite data.
    let mut model = Model::new(manifest.config.clone(), &mut Rng::new(0))?;
    let expected: Vec<(String, Vec<usize>)> = model
        .named_params()
        .iter()
        .map(|(n, t)| (n.clone(), t.shape().to_vec()))
        .collect();
    if expected.len() != manifest.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "{}: manifest lists {} tensors, config implies {}",
            path.display(),
            manifest.tensors.len(),
            expected.len()
        )));
    }
    for ((name, shape), entry) in expected.iter().zip(&manifest.tensors) {
        if name != &entry.name || shape != &entry.shape {
            return Err(Error::Checkpoint(format!(
                "{}: tensor {} {:?} does not match config expectation {} {:?}",
                path.display(),
                entry.name,
                entry.shape,
                name,
                shape
            )));
        }
    }
    let total: usize = expected.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
    if bytes.len() != payload_start + total * 8 {
        return Err(Error::Checkpoint(format!(
            "{}: payload is {} bytes, expected {}",
            path.display(),
            bytes.len() - payload_start,
            total * 8
        )));
    }
    let mut offset = payload_start;
    for (_, tensor) in model.named_params_mut() {
        let n = tensor.numel();
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let chunk: [u8; 8] = bytes[offset + i * 8..offset + (i + 1) * 8].try_into().unwrap();
            data.push(f64::from_le_bytes(chunk));
        }
        offset += n * 8;
        let shape = tensor.shape().to_vec();
        *tensor = Tensor::from_vec(data, &shape)?;
    }
    Ok(model)
}
