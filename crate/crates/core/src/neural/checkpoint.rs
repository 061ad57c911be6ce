//! Checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "LCMODEL1"
//! header_len u64
//! header     JSON {"spec": ModelSpec, "params": [{"name", "shape"}], "metadata": any}
//! payload    every parameter in header order as f64 LE
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec, NeuralError};

const MAGIC: &[u8; 8] = b"LCMODEL1";

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    params: Vec<ParamEntry>,
    metadata: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, model: &Model, metadata: &serde_json::Value) -> Result<(), NeuralError> {
    let header = Header {
        spec: model.spec().clone(),
        params: model.params().iter().map(|(n, t)| ParamEntry { name: n.to_string(), shape: t.shape().to_vec() }).collect(),
        metadata: metadata.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * model.params().scalar_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in model.params().tensors() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, serde_json::Value), NeuralError> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| NeuralError::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a model checkpoint"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(&e.to_string()))?;
    let mut model = Model::new(header.spec, 0)?;
    let mut offset = 16 + hlen;
    let names: Vec<String> = model.params().names().to_vec();
    if names.len() != header.params.len() {
        return Err(bad("parameter list does not match the spec"));
    }
    for ((entry, name), tensor) in header.params.iter().zip(&names).zip(model.params_mut().tensors_mut()) {
        if &entry.name != name || entry.shape != tensor.shape() {
            return Err(bad(&format!("unexpected parameter {}", entry.name)));
        }
        for v in tensor.data_mut() {
            let chunk = bytes.get(offset..offset + 8).ok_or_else(|| bad("truncated payload"))?;
            *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            offset += 8;
        }
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok((model, header.metadata))
}
