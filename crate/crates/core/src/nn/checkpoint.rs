//! Binary checkpoint: 8-byte magic `UDCMDL01`, a little-endian `u64` header
//! length, the UTF-8 JSON header, then every tensor as raw little-endian
//! `f32` in header order.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{EncoderConfig, ModelState};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"UDCMDL01";
const MAGIC_PREFIX: &[u8; 6] = b"UDCMDL";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: EncoderConfig,
    rng_seed: u64,
    dtype: String,
    tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(model: &ModelState<f32>) -> Result<Vec<u8>> {
    let params = model.parameters();
    let header = Header {
        config: model.config.clone(),
        rng_seed: model.rng_seed,
        dtype: "f32".into(),
        tensors: params
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                shape: p.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let body: usize = params.iter().map(|p| p.value.len() * 4).sum();
    let mut buf = Vec::with_capacity(16 + json.len() + body);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for p in params {
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn save_checkpoint(model: &ModelState<f32>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelState<f32>> {
    if bytes.len() < 16 {
        return Err(Error::Format("file too short for header".into()));
    }
    if &bytes[..8] != MAGIC {
        if &bytes[..6] == MAGIC_PREFIX {
            return Err(Error::Version {
                expected: String::from_utf8_lossy(MAGIC).into(),
                found: String::from_utf8_lossy(&bytes[..8]).into(),
            });
        }
        return Err(Error::Format("bad magic bytes".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body_start = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..body_start])
        .map_err(|e| Error::Format(format!("header json: {e}")))?;
    if header.dtype != "f32" {
        return Err(Error::Format(format!("unsupported dtype {}", header.dtype)));
    }
    let mut model = ModelState::<f32>::new(header.config.clone(), None, header.rng_seed)?;
    let mut offset = body_start;
    {
        let mut params = model.parameters_mut();
        if params.len() != header.tensors.len() {
            return Err(Error::Shape(format!(
                "header lists {} tensors, config implies {}",
                header.tensors.len(),
                params.len()
            )));
        }
        for (p, entry) in params.iter_mut().zip(&header.tensors) {
            if p.name != entry.name || p.shape() != entry.shape.as_slice() {
                return Err(Error::Shape(format!(
                    "tensor {} {:?} does not match config ({} {:?})",
                    entry.name,
                    entry.shape,
                    p.name,
                    p.shape()
                )));
            }
            let n: usize = entry.shape.iter().product();
            let end = offset + n * 4;
            if end > bytes.len() {
                return Err(Error::Format(format!("truncated data for tensor {}", entry.name)));
            }
            let data: Vec<f32> = bytes[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            p.value = Tensor::new(entry.shape.clone(), data)?;
            offset = end;
        }
    }
    if offset != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - offset)));
    }
    Ok(model)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelState<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and checks it was built for `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &EncoderConfig) -> Result<ModelState<f32>> {
    let model = load_checkpoint(path)?;
    let c = &model.config;
    if c.vocab_size != expected.vocab_size
        || c.embed_dim != expected.embed_dim
        || c.kernel_sizes != expected.kernel_sizes
        || c.filters_per_kernel != expected.filters_per_kernel
        || c.num_classes != expected.num_classes
    {
        return Err(Error::Shape(format!(
            "checkpoint config {c:?} does not match expected {expected:?}"
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(filters: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size: 20,
            embed_dim: 5,
            kernel_sizes: vec![3, 4, 5],
            filters_per_kernel: filters,
            dropout_p: 0.5,
            max_len: 10,
            num_classes: 4,
            freeze_embeddings: false,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = ModelState::<f32>::new(config(3), None, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.udc");
        save_checkpoint(&model, &p).unwrap();
        let back = load_checkpoint(&p).unwrap();
        for (a, b) in model.parameters().iter().zip(back.parameters()) {
            let ab: Vec<u32> = a.value.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.value.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb, "{}", a.name);
        }
        assert_eq!(back.config, model.config);
        assert_eq!(encode_checkpoint(&back).unwrap(), std::fs::read(&p).unwrap());
    }

    #[test]
    fn rejects_corruption() {
        let model = ModelState::<f32>::new(config(2), None, 1).unwrap();
        let bytes = encode_checkpoint(&model).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format(_))));
        let mut v2 = bytes.clone();
        v2[6..8].copy_from_slice(b"02");
        assert!(matches!(decode_checkpoint(&v2), Err(Error::Version { .. })));
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(decode_checkpoint(&bytes[..20]).is_err());
    }

    #[test]
    fn config_mismatch_is_shape_error() {
        let model = ModelState::<f32>::new(config(3), None, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.udc");
        save_checkpoint(&model, &p).unwrap();
        assert!(matches!(load_checkpoint_for(&p, &config(4)), Err(Error::Shape(_))));
        assert!(load_checkpoint_for(&p, &config(3)).is_ok());
    }

    #[test]
    fn header_shape_mismatch_is_shape_error() {
        let model = ModelState::<f32>::new(config(3), None, 1).unwrap();
        let bytes = encode_checkpoint(&model).unwrap();
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header = String::from_utf8(bytes[16..16 + hlen].to_vec()).unwrap();
        let tampered = header.replace("\"filters_per_kernel\":3", "\"filters_per_kernel\":2");
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&(tampered.len() as u64).to_le_bytes());
        out.extend_from_slice(tampered.as_bytes());
        out.extend_from_slice(&bytes[16 + hlen..]);
        assert!(matches!(decode_checkpoint(&out), Err(Error::Shape(_))));
    }
}
