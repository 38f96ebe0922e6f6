//! Model file: `b"LOBM"`, format version (u32), header length (u64), a JSON
//! header with the configuration, provenance and tensor shapes, then every
//! parameter as little-endian f64 in storage order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, TrainMeta, ValuationModel};
use crate::autodiff::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"LOBM";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    meta: TrainMeta,
    shapes: Vec<(usize, usize)>,
}

fn corrupt(msg: &str) -> ModelError {
    ModelError::Checkpoint(msg.to_string())
}

impl ValuationModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config,
            meta: self.meta.clone(),
            shapes: self.params.iter().map(Tensor::shape).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in &self.params {
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(corrupt("not a model file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version > CHECKPOINT_VERSION {
            return Err(ModelError::VersionMismatch {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        header.config.validate()?;
        if header.shapes != header.config.param_shapes() {
            return Err(corrupt("tensor shapes do not match the configuration"));
        }
        let mut rest = &bytes[16 + hlen..];
        let mut params = Vec::with_capacity(header.shapes.len());
        for &(r, c) in &header.shapes {
            let n = r * c;
            if rest.len() < 8 * n {
                return Err(corrupt("truncated parameters"));
            }
            let data = rest[..8 * n]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            params.push(Tensor::from_vec(r, c, data));
            rest = &rest[8 * n..];
        }
        if !rest.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(ValuationModel {
            config: header.config,
            params,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        ValuationModel::from_bytes(&fs::read(path)?)
    }
}
