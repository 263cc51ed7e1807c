//! Checkpoint files: magic `EDCCKP01`, a `u64` little-endian header length,
//! a JSON header, then every parameter tensor as little-endian floats in
//! declaration order. Optimizer moments, when present, follow as two more
//! full parameter sets (first then second moment).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::{ModelConfig, ModelParams};
use crate::nn::tensor::ShapeFmt;
use crate::scalar::Scalar;
use crate::stamp::RunStamp;
use crate::train::adam::AdamState;

const MAGIC_PREFIX: &[u8; 6] = b"EDCCKP";
const VERSION: &[u8; 2] = b"01";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    config: ModelConfig,
    seed: u64,
    tensors: Vec<TensorEntry>,
    optimizer_step: Option<u64>,
    #[serde(default)]
    extra: serde_json::Value,
    stamp: Option<RunStamp>,
}

/// Model weights plus everything needed to resume or reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub seed: u64,
    pub optimizer: Option<AdamState<T>>,
    /// Free-form metadata (training state, feature scaler, curve timing).
    pub extra: serde_json::Value,
    pub stamp: Option<RunStamp>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn new(params: ModelParams<T>, seed: u64) -> Self {
        Checkpoint {
            params,
            seed,
            optimizer: None,
            extra: serde_json::Value::Null,
            stamp: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let p = &self.params;
        let header = Header {
            format_version: CHECKPOINT_FORMAT_VERSION,
            dtype: T::DTYPE.to_string(),
            config: p.config.clone(),
            seed: self.seed,
            tensors: p
                .tensor_names()
                .into_iter()
                .zip(p.tensors())
                .map(|(name, t)| TensorEntry { name, shape: t.shape().to_vec() })
                .collect(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            extra: self.extra.clone(),
            stamp: self.stamp.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 3 * T::BYTES * p.count_params());
        out.extend_from_slice(MAGIC_PREFIX);
        out.extend_from_slice(VERSION);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut sets = vec![p];
        if let Some(o) = &self.optimizer {
            sets.push(&o.m);
            sets.push(&o.v);
        }
        for set in sets {
            for t in set.tensors() {
                for &v in &t.data {
                    v.write_le(&mut out);
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..6] != MAGIC_PREFIX {
            return Err(Error::format(path, "missing checkpoint magic"));
        }
        if &bytes[6..8] != VERSION {
            return Err(Error::VersionMismatch {
                path: path.into(),
                found: String::from_utf8_lossy(&bytes[6..8]).into_owned(),
                expected: String::from_utf8_lossy(VERSION).into_owned(),
            });
        }
        let mut len = [0u8; 8];
        len.copy_from_slice(&bytes[8..16]);
        let hlen = u64::from_le_bytes(len) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(Error::Truncated {
                path: path.into(),
                expected: (16 + hlen) as u64,
                found: bytes.len() as u64,
            });
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::format(path, format!("corrupt header: {e}")))?;
        if header.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                path: path.into(),
                found: header.format_version.to_string(),
                expected: CHECKPOINT_FORMAT_VERSION.to_string(),
            });
        }
        if header.dtype != T::DTYPE {
            return Err(Error::format(
                path,
                format!("checkpoint holds {} values, expected {}", header.dtype, T::DTYPE),
            ));
        }
        let mut params = ModelParams::<T>::zeros(&header.config)?;
        let expected: Vec<TensorEntry> = params
            .tensor_names()
            .into_iter()
            .zip(params.tensors())
            .map(|(name, t)| TensorEntry { name, shape: t.shape().to_vec() })
            .collect();
        if expected != header.tensors {
            let fmt = |v: &[TensorEntry]| {
                v.iter()
                    .map(|e| format!("{}{}", e.name, ShapeFmt(&e.shape)))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            return Err(Error::shape(fmt(&expected), fmt(&header.tensors)));
        }
        let n = params.count_params();
        let sets = if header.optimizer_step.is_some() { 3 } else { 1 };
        let blob = &body[hlen..];
        let need = sets * n * T::BYTES;
        if blob.len() < need {
            return Err(Error::Truncated {
                path: path.into(),
                expected: (16 + hlen + need) as u64,
                found: bytes.len() as u64,
            });
        }
        if blob.len() > need {
            return Err(Error::format(path, format!("{} trailing bytes", blob.len() - need)));
        }
        let mut values = blob.chunks_exact(T::BYTES).map(T::read_le);
        let mut fill = |p: &mut ModelParams<T>| {
            for t in p.tensors_mut() {
                for v in t.data.iter_mut() {
                    *v = values.next().expect("length checked");
                }
            }
        };
        fill(&mut params);
        let optimizer = match header.optimizer_step {
            Some(step) => {
                let mut m = ModelParams::zeros(&header.config)?;
                let mut v = ModelParams::zeros(&header.config)?;
                fill(&mut m);
                fill(&mut v);
                Some(AdamState { step, m, v })
            }
            None => None,
        };
        Ok(Checkpoint {
            params,
            seed: header.seed,
            optimizer,
            extra: header.extra,
            stamp: header.stamp,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }
}

/// Writes weights only.
pub fn save_params<T: Scalar>(params: &ModelParams<T>, seed: u64, path: &Path) -> Result<()> {
    Checkpoint::new(params.clone(), seed).save(path)
}

pub fn load_params<T: Scalar>(path: &Path) -> Result<ModelParams<T>> {
    Ok(Checkpoint::load(path)?.params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    fn sample() -> Checkpoint<f32> {
        let params = ModelParams::<f32>::init(&ModelConfig::micro(), 9).unwrap();
        let mut c = Checkpoint::new(params.clone(), 9);
        let mut m = params.clone();
        m.tensors_mut()[0].data[0] = 0.125;
        c.optimizer = Some(AdamState { step: 17, m, v: params });
        c.extra = serde_json::json!({"epoch": 4});
        c
    }

    #[test]
    fn roundtrip_with_optimizer() {
        let c = sample();
        let back = Checkpoint::<f32>::from_bytes(&c.to_bytes().unwrap(), p()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn file_roundtrip_preserves_forward() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let params = ModelParams::<f32>::init(&ModelConfig::micro(), 1).unwrap();
        save_params(&params, 1, &path).unwrap();
        let loaded: ModelParams<f32> = load_params(&path).unwrap();
        let x = [0.3f32; 16];
        let a = params.predict(&x).unwrap();
        let b = loaded.predict(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn corrupt_header_is_format_error() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[17] = b'#';
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bytes, p()), Err(Error::Format { .. })));
        bytes[0] = b'Z';
        assert!(matches!(Checkpoint::<f32>::from_bytes(&bytes, p()), Err(Error::Format { .. })));
    }

    #[test]
    fn version_and_shape_errors_are_distinct() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[7] = b'9';
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bytes, p()),
            Err(Error::VersionMismatch { .. })
        ));

        let c = sample();
        let mut raw = c.to_bytes().unwrap();
        let hstart = 16;
        let hlen = u64::from_le_bytes(raw[8..16].try_into().unwrap()) as usize;
        let header = String::from_utf8(raw[hstart..hstart + hlen].to_vec())
            .unwrap()
            .replacen("\"shape\":[8,16]", "\"shape\":[8,15]", 1);
        assert_eq!(header.len(), hlen);
        raw.splice(hstart..hstart + hlen, header.into_bytes());
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&raw, p()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn truncated_blob() {
        let bytes = sample().to_bytes().unwrap();
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 5], p()),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn dtype_mismatch() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::<f64>::from_bytes(&bytes, p()).is_err());
    }
}
