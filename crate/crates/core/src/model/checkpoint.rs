//! Versioned binary checkpoint container.
//!
//! Layout: the 8-byte magic `VLDCKPT\0`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header, then every
//! tensor's elements in little-endian order, tensors in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

use super::{make_schedule, LayerSchedule, ModelConfig, TransformerModel};

pub const MAGIC: &[u8; 8] = b"VLDCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub dtype: String,
    pub config: ModelConfig,
    pub schedule: LayerSchedule,
    pub output_head: String,
    pub tensors: Vec<TensorEntry>,
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn encode<T: Real>(model: &TransformerModel<T>) -> Vec<u8> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        dtype: T::DTYPE.to_string(),
        config: model.config().clone(),
        schedule: model.schedule().clone(),
        output_head: "untied".to_string(),
        tensors: model
            .params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + header.len() + model.param_count() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in model.params.iter() {
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    out
}

/// Reads only the header, e.g. to check compatibility before loading.
pub fn decode_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize)> {
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(ckpt_err("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(ckpt_err(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..20 + hlen).ok_or_else(|| ckpt_err("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| ckpt_err(format!("bad header: {e}")))?;
    Ok((header, 20 + hlen))
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<TransformerModel<T>> {
    let (header, mut offset) = decode_header(bytes)?;
    if header.dtype != T::DTYPE {
        return Err(ckpt_err(format!(
            "checkpoint holds {} tensors, requested {}",
            header.dtype,
            T::DTYPE
        )));
    }
    let expected = make_schedule(header.config.pattern, header.config.base_depth, header.config.factor)?;
    if expected != header.schedule {
        return Err(ckpt_err("stored schedule does not match stored config"));
    }
    let mut model = TransformerModel::<T>::build(&header.config)?;
    if model.params.len() != header.tensors.len() {
        return Err(ckpt_err("tensor list does not match the model layout"));
    }
    for (p, entry) in model.params.iter_mut().zip(&header.tensors) {
        if p.name != entry.name || p.value.shape() != entry.shape.as_slice() {
            return Err(ckpt_err(format!("unexpected tensor {}", entry.name)));
        }
        let n = p.value.numel() * T::BYTES;
        let raw = bytes
            .get(offset..offset + n)
            .ok_or_else(|| ckpt_err(format!("truncated data for {}", entry.name)))?;
        let data: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        p.value = Tensor::new(entry.shape.clone(), data)?;
        offset += n;
    }
    if offset != bytes.len() {
        return Err(ckpt_err("trailing bytes after tensor data"));
    }
    Ok(model)
}

pub fn save<T: Real>(model: &TransformerModel<T>, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Real>(path: &Path) -> Result<TransformerModel<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn load_header(path: &Path) -> Result<CheckpointHeader> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_header(&bytes).map(|(h, _)| h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VldPattern;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 7,
            context_length: 6,
            embed_dim: 4,
            head_count: 2,
            mlp_hidden_dim: 8,
            base_depth: 2,
            pattern: VldPattern::InverseCycle,
            factor: 3,
            seed: 1,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = TransformerModel::<f32>::build(&cfg()).unwrap();
        let bytes = encode(&m);
        let back = decode::<f32>(&bytes).unwrap();
        for (a, b) in m.params.iter().zip(back.params.iter()) {
            assert_eq!(a.name, b.name);
            let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let m = TransformerModel::<f32>::build(&cfg()).unwrap();
        let bytes = encode(&m);
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode::<f64>(&bytes).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode::<f32>(&bad).is_err());
    }
}
