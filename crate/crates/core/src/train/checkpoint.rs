//! Binary checkpoint layout:
//!
//! ```text
//! "GABARCKPT" | version u32 LE | header length u32 LE | header JSON
//! | parameter data, f64 LE, in header order | SHA-256 of all prior bytes
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::GraphDims;
use crate::model::{init_params, Model, ModelConfig, ModelError};
use crate::pddl::Domain;
use crate::tensor::{ParamStore, Tensor};

use super::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"GABARCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    /// `None` for checkpoints written without validation (fresh models).
    pub best_val_loss: Option<f64>,
    pub epoch: usize,
    pub domain_sha: String,
    pub train: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dims: GraphDims,
    arities: Vec<usize>,
    config: ModelConfig,
    seed: u64,
    best_val_loss: Option<f64>,
    epoch: usize,
    domain_sha: String,
    train: Option<TrainConfig>,
    params: Vec<ParamEntry>,
}

impl Checkpoint {
    /// Wraps an untrained model.
    pub fn fresh(domain: &Domain, model: Model) -> Self {
        Checkpoint { model, best_val_loss: None, epoch: 0, domain_sha: super::domain_sha(domain), train: None }
    }

    /// The model, after checking it was built for `domain`'s dimensions.
    pub fn model_for(&self, domain: &Domain) -> Result<&Model, ModelError> {
        self.model.check_domain(domain)?;
        Ok(&self.model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            dims: self.model.dims,
            arities: self.model.arities.clone(),
            config: self.model.config,
            seed: self.model.params.seed,
            best_val_loss: self.best_val_loss,
            epoch: self.epoch,
            domain_sha: self.domain_sha.clone(),
            train: self.train,
            params: self.model.params.iter().map(|(n, t)| ParamEntry { name: n.into(), shape: t.shape.clone() }).collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(json.len() + 8 * self.model.num_scalars() + 64);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.model.params.iter() {
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let corrupt = |m: &str| CheckpointError::Corrupt(m.into());
        let m = CHECKPOINT_MAGIC.len();
        if bytes.len() < m || &bytes[..m] != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < m + 8 + 32 {
            return Err(corrupt("truncated"));
        }
        let version = u32::from_le_bytes(bytes[m..m + 4].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: version });
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let hlen = u32::from_le_bytes(body[m + 4..m + 8].try_into().unwrap()) as usize;
        let hstart = m + 8;
        let json = body.get(hstart..hstart + hlen).ok_or_else(|| corrupt("header extends past end"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;

        // Shapes must be exactly what the recorded config allocates.
        let expected = init_params(&header.dims, &header.config, header.seed)?;
        if expected.len() != header.params.len() {
            return Err(corrupt("parameter list does not match config"));
        }
        let mut data = &body[hstart + hlen..];
        let mut params = ParamStore::new(header.seed);
        for (entry, (name, t)) in header.params.iter().zip(expected.iter()) {
            if entry.name != name || entry.shape != t.shape {
                return Err(CheckpointError::Corrupt(format!("parameter `{}` does not match config", entry.name)));
            }
            let n = t.len();
            if data.len() < 8 * n {
                return Err(corrupt("parameter data truncated"));
            }
            let vals = data[..8 * n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            data = &data[8 * n..];
            params.insert(name, Tensor::from_vec(&entry.shape, vals));
        }
        if !data.is_empty() {
            return Err(corrupt("trailing bytes after parameter data"));
        }
        Ok(Checkpoint {
            model: Model { dims: header.dims, arities: header.arities, config: header.config, params },
            best_val_loss: header.best_val_loss,
            epoch: header.epoch,
            domain_sha: header.domain_sha,
            train: header.train,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        Ok(fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        Checkpoint::from_bytes(&fs::read(path)?)
    }
}
