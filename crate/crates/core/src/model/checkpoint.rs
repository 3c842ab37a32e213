//! Binary checkpoint files.
//!
//! Layout (little-endian): `b"DCLN"`, `u32` format version, `u32` header
//! length, a JSON header `{arch, config, kinds}`, then one record per
//! parameter in canonical order: `u16` name length, name bytes, `u8` rank,
//! `u32` per dimension, and the raw `f32` values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distortion::DistortionKind;
use crate::nn::{Parameter, Tensor};

use super::hcc::ClassifierConfig;
use super::{ClassifierModel, ModelConfig, ModelError, MultiTaskModel};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DCLN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub arch: String,
    pub config: serde_json::Value,
    pub kinds: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LoadedModel {
    MultiTask(MultiTaskModel),
    Classifier(ClassifierModel),
}

/// Models that can be written to a checkpoint.
pub trait Checkpoint: Sized {
    const ARCH: &'static str;
    fn config_json(&self) -> serde_json::Value;
    fn named_params(&self) -> Vec<(String, &Parameter<f32>)>;
    fn from_config(config: serde_json::Value) -> Result<Self, String>;
    fn params_mut_ordered(&mut self) -> Vec<&mut Parameter<f32>>;
}

impl Checkpoint for MultiTaskModel {
    const ARCH: &'static str = "mtl";

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(self.config()).expect("config serializes")
    }

    fn named_params(&self) -> Vec<(String, &Parameter<f32>)> {
        self.param_names().into_iter().zip(self.params()).collect()
    }

    fn from_config(config: serde_json::Value) -> Result<Self, String> {
        let cfg: ModelConfig = serde_json::from_value(config).map_err(|e| e.to_string())?;
        MultiTaskModel::new(cfg, 0).map_err(|e| e.to_string())
    }

    fn params_mut_ordered(&mut self) -> Vec<&mut Parameter<f32>> {
        self.params_mut()
    }
}

impl Checkpoint for ClassifierModel {
    const ARCH: &'static str = "hcc";

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(self.config()).expect("config serializes")
    }

    fn named_params(&self) -> Vec<(String, &Parameter<f32>)> {
        self.param_names().into_iter().zip(self.params()).collect()
    }

    fn from_config(config: serde_json::Value) -> Result<Self, String> {
        let cfg: ClassifierConfig = serde_json::from_value(config).map_err(|e| e.to_string())?;
        ClassifierModel::new(cfg, 0).map_err(|e| e.to_string())
    }

    fn params_mut_ordered(&mut self) -> Vec<&mut Parameter<f32>> {
        self.params_mut()
    }
}

fn canonical_kinds() -> Vec<String> {
    DistortionKind::ALL.iter().map(|k| k.name().to_string()).collect()
}

pub fn encode<M: Checkpoint>(model: &M) -> Vec<u8> {
    let header = CheckpointHeader {
        arch: M::ARCH.to_string(),
        config: model.config_json(),
        kinds: canonical_kinds(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for (name, p) in model.named_params() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(p.shape().len() as u8);
        for &d in p.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint<M: Checkpoint>(model: &M, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.bytes.len() - self.pos < n {
            return Err(ModelError::Truncated {
                path: self.path.to_path_buf(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn malformed(&self, reason: impl Into<String>) -> ModelError {
        ModelError::Malformed {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, ModelError> {
    std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_header<'a>(r: &mut Reader<'a>) -> Result<CheckpointHeader, ModelError> {
    let path: PathBuf = r.path.to_path_buf();
    if r.bytes.len() < 4 {
        return Err(if CHECKPOINT_MAGIC.starts_with(r.bytes) {
            ModelError::Truncated { path }
        } else {
            ModelError::BadMagic { path }
        });
    }
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(ModelError::BadMagic { path });
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::VersionMismatch {
            path,
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let len = r.u32()? as usize;
    let raw = r.take(len)?;
    let header: CheckpointHeader = serde_json::from_slice(raw).map_err(|e| r.malformed(format!("header: {e}")))?;
    let expected = canonical_kinds();
    if header.kinds != expected {
        return Err(ModelError::KindOrderMismatch {
            path,
            found: header.kinds,
            expected,
        });
    }
    Ok(header)
}

/// Reads and validates only the header.
pub fn read_header(path: impl AsRef<Path>) -> Result<CheckpointHeader, ModelError> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    parse_header(&mut Reader {
        bytes: &bytes,
        pos: 0,
        path,
    })
}

fn decode_body<M: Checkpoint>(r: &mut Reader<'_>, header: CheckpointHeader) -> Result<M, ModelError> {
    if header.arch != M::ARCH {
        return Err(ModelError::ArchMismatch {
            path: r.path.to_path_buf(),
            found: header.arch,
            expected: M::ARCH.to_string(),
        });
    }
    let mut model = M::from_config(header.config).map_err(|e| r.malformed(format!("config: {e}")))?;
    let names: Vec<String> = model.named_params().into_iter().map(|(n, _)| n).collect();
    for (name, p) in names.into_iter().zip(model.params_mut_ordered()) {
        let len = r.u16()? as usize;
        let found = r.take(len)?;
        if found != name.as_bytes() {
            return Err(r.malformed(format!(
                "expected parameter {name}, found {}",
                String::from_utf8_lossy(found)
            )));
        }
        let rank = r.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        if shape != p.shape() {
            return Err(r.malformed(format!("{name}: shape {shape:?}, expected {:?}", p.shape())));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let value = Tensor::new(shape, data).map_err(|e| r.malformed(format!("{name}: {e}")))?;
        *p = Parameter::new(value);
    }
    if r.pos != r.bytes.len() {
        return Err(r.malformed("trailing bytes after the last parameter"));
    }
    Ok(model)
}

fn load_as<M: Checkpoint>(path: &Path) -> Result<M, ModelError> {
    let bytes = read_file(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let header = parse_header(&mut r)?;
    decode_body(&mut r, header)
}

pub fn load_multitask(path: impl AsRef<Path>) -> Result<MultiTaskModel, ModelError> {
    load_as(path.as_ref())
}

pub fn load_classifier(path: impl AsRef<Path>) -> Result<ClassifierModel, ModelError> {
    load_as(path.as_ref())
}

/// Loads whichever architecture the file holds.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LoadedModel, ModelError> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    let header = parse_header(&mut r)?;
    match header.arch.as_str() {
        MultiTaskModel::ARCH => decode_body(&mut r, header).map(LoadedModel::MultiTask),
        ClassifierModel::ARCH => decode_body(&mut r, header).map(LoadedModel::Classifier),
        other => Err(r.malformed(format!("unknown architecture {other:?}"))),
    }
}
