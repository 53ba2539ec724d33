//! Single-file model container:
//!
//! ```text
//! "BSPDCKPT" | major u16 | minor u16 | header_len u64 | header JSON | f32 LE payload
//! ```
//!
//! The header holds the model config, normalization statistics, training
//! metadata and the tensor index (name, shape, payload offset in floats).
//! Readers accept any minor version of their major version.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::train::EpochStats;
use super::{Model, ModelConfig, Real};
use crate::error::{Error, Result};
use crate::preprocess::NormStats;

const MAGIC: &[u8; 8] = b"BSPDCKPT";
pub const FORMAT_MAJOR: u16 = 1;
pub const FORMAT_MINOR: u16 = 0;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_f1: Option<f64>,
    pub train_windows: usize,
    pub val_windows: usize,
    pub history: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub norm: NormStats,
    pub meta: TrainMeta,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    norm: NormStats,
    meta: TrainMeta,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, norm: NormStats, meta: TrainMeta) -> Result<Self> {
        norm.validate()?;
        let tensors = model
            .param_names()
            .into_iter()
            .zip(model.params())
            .map(|(name, p)| NamedTensor {
                name,
                rows: p.nrows(),
                cols: p.ncols(),
                data: p.iter().copied().collect(),
            })
            .collect();
        Ok(Self {
            config: model.config().clone(),
            norm,
            meta,
            tensors,
        })
    }

    /// Rebuilds the network in precision `F`, checking every tensor's name
    /// and shape.
    pub fn model<F: Real>(&self) -> Result<Model<F>> {
        let mut model = Model::<F>::new(&self.config)?;
        let names = model.param_names();
        if names.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                names.len(),
                self.tensors.len()
            )));
        }
        for ((name, dst), t) in names.iter().zip(model.params_mut()).zip(&self.tensors) {
            if *name != t.name || dst.dim() != (t.rows, t.cols) {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {}x{} does not match {} {:?}",
                    t.name,
                    t.rows,
                    t.cols,
                    name,
                    dst.dim()
                )));
            }
            *dst = Array2::from_shape_vec((t.rows, t.cols), t.data.iter().map(|&v| F::of(v as f64)).collect())
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let entries = self
            .tensors
            .iter()
            .map(|t| {
                let e = TensorEntry {
                    name: t.name.clone(),
                    shape: [t.rows, t.cols],
                    offset,
                };
                offset += t.data.len();
                e
            })
            .collect();
        let header = Header {
            config: self.config.clone(),
            norm: self.norm.clone(),
            meta: self.meta.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + json.len() + 4 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_MAJOR.to_le_bytes());
        out.extend_from_slice(&FORMAT_MINOR.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_owned());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let major = u16::from_le_bytes([bytes[8], bytes[9]]);
        if major != FORMAT_MAJOR {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {major}, expected {FORMAT_MAJOR}"
            )));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if body.len() < header_len {
            return Err(bad("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..header_len]).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let payload = &body[header_len..];
        if payload.len() % 4 != 0 {
            return Err(bad("payload is not a whole number of floats"));
        }
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let tensors = header
            .tensors
            .into_iter()
            .map(|e| {
                let n = e.shape[0] * e.shape[1];
                let data = floats
                    .get(e.offset..e.offset + n)
                    .ok_or_else(|| Error::Checkpoint(format!("tensor {} out of bounds", e.name)))?
                    .to_vec();
                Ok(NamedTensor {
                    name: e.name,
                    rows: e.shape[0],
                    cols: e.shape[1],
                    data,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        header.config.validate()?;
        Ok(Self {
            config: header.config,
            norm: header.norm,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Checkpoint {
        let cfg = ModelConfig {
            layers: 2,
            channels: 4,
            heads: 2,
            head_dim: 2,
            fcn_hidden: 4,
            ..ModelConfig::default()
        };
        let model = Model::<f32>::new(&cfg).unwrap();
        Checkpoint::from_model(&model, NormStats::identity(), TrainMeta::default()).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let ck = small();
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.model::<f32>().unwrap(), ck.model::<f32>().unwrap());
    }

    #[test]
    fn rejects_other_major_version_and_garbage() {
        let mut bytes = small().to_bytes().unwrap();
        bytes[8] = 2;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"));
        assert!(Checkpoint::from_bytes(b"hello").is_err());
    }

    #[test]
    fn accepts_newer_minor_version() {
        let mut bytes = small().to_bytes().unwrap();
        bytes[10] = 7;
        assert!(Checkpoint::from_bytes(&bytes).is_ok());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut ck = small();
        ck.tensors[0].rows += 1;
        assert!(ck.model::<f32>().is_err());
    }
}
