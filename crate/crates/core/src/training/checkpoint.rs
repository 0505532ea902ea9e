//! Single-file checkpoints.
//!
//! Layout: 8-byte magic, header length as u64 little-endian, a JSON header
//! (dataset fingerprint, training config, parameter names and shapes), then
//! every parameter value as f64 little-endian in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::dataio::HinDataset;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numeric::{Matrix, ParameterSet};

const MAGIC: &[u8; 8] = b"HPROTO01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    dataset_hash: String,
    config: TrainConfig,
    params: Vec<ParamEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub dataset_hash: String,
    pub config: TrainConfig,
    pub params: ParameterSet,
}

pub fn encode_checkpoint(model: &ModelParams, config: &TrainConfig, dataset_hash: &str) -> Result<Vec<u8>> {
    let header = Header {
        dataset_hash: dataset_hash.to_string(),
        config: config.clone(),
        params: model
            .params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.params.num_scalars());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in model.params.iter() {
        for x in p.value.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..).ok_or_else(|| bad("truncated header"))?;
    if body.len() < len {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..len])?;
    let mut payload = body[len..].chunks_exact(8);
    let expected: usize = header.params.iter().map(|p| p.rows * p.cols).sum();
    if payload.len() != expected || !payload.remainder().is_empty() {
        return Err(Error::Checkpoint(format!(
            "payload holds {} bytes, header declares {} values",
            body.len() - len,
            expected
        )));
    }
    let mut params = ParameterSet::new();
    for entry in &header.params {
        let data = payload
            .by_ref()
            .take(entry.rows * entry.cols)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.add(entry.name.clone(), Matrix::from_vec(entry.rows, entry.cols, data)?);
    }
    Ok(Checkpoint {
        dataset_hash: header.dataset_hash,
        config: header.config,
        params,
    })
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &ModelParams,
    config: &TrainConfig,
    dataset_hash: &str,
) -> Result<()> {
    let bytes = encode_checkpoint(model, config, dataset_hash)?;
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path.as_ref())?)
}

impl Checkpoint {
    /// Rebuilds the model for `ds`, which must be the dataset it was trained on.
    pub fn restore(&self, ds: &HinDataset) -> Result<ModelParams> {
        let found = ds.fingerprint();
        if found != self.dataset_hash {
            return Err(Error::DatasetMismatch {
                expected: self.dataset_hash.clone(),
                found,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut model = ModelParams::init(
            &self.config.model,
            &ds.feature_dims(),
            ds.type_names(),
            ds.n_classes,
            &mut rng,
        )?;
        model.params.copy_values_from(&self.params)?;
        Ok(model)
    }
}
