//! Binary checkpoint serialization for [`BocfModel`].
//!
//! Layout (all integers little-endian u32, floats little-endian f64):
//!
//! ```text
//! magic    8 bytes  "BOCFCKPT"
//! version  u32      currently 1
//! config   u32 byte length, then that many bytes of BocfConfig JSON
//! count    u32      number of named tensors
//! tensor*  u32 name length, name (UTF-8),
//!          u32 rank, rank x u32 dims,
//!          prod(dims) x f64 values
//! ```
//!
//! Tensors are written in canonical parameter order; the loader accepts any
//! order but requires exactly the names and shapes the config implies, so a
//! round trip is bit-exact and a mismatched file is rejected.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BocfConfig, BocfModel, ModelError};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"BOCFCKPT";
const VERSION: u32 = 1;

// Sanity bounds so a corrupt header cannot demand absurd allocations.
const MAX_NAME_LEN: u32 = 1 << 12;
const MAX_RANK: u32 = 8;
const MAX_ELEMENTS: usize = 1 << 30;

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::CheckpointFormat(msg.into())
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<(), ModelError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_tensor(w: &mut impl Write, name: &str, t: &Tensor) -> Result<(), ModelError> {
    write_u32(w, name.len() as u32)?;
    w.write_all(name.as_bytes())?;
    write_u32(w, t.shape().len() as u32)?;
    for &d in t.shape() {
        write_u32(w, d as u32)?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor(r: &mut impl Read) -> Result<(String, Tensor), ModelError> {
    let name_len = read_u32(r)?;
    if name_len == 0 || name_len > MAX_NAME_LEN {
        return Err(bad(format!("tensor name length {} out of range", name_len)));
    }
    let mut name_buf = vec![0u8; name_len as usize];
    r.read_exact(&mut name_buf)?;
    let name = String::from_utf8(name_buf).map_err(|_| bad("tensor name is not UTF-8"))?;

    let rank = read_u32(r)?;
    if rank > MAX_RANK {
        return Err(bad(format!("tensor '{}' has rank {}", name, rank)));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut len: usize = 1;
    for _ in 0..rank {
        let d = read_u32(r)? as usize;
        len = len
            .checked_mul(d)
            .filter(|&l| l <= MAX_ELEMENTS)
            .ok_or_else(|| bad(format!("tensor '{}' is implausibly large", name)))?;
        shape.push(d);
    }
    let mut data = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    let tensor = Tensor::new(shape, data)
        .map_err(|e| bad(format!("tensor '{}' is invalid: {}", name, e)))?;
    Ok((name, tensor))
}

impl BocfModel {
    /// Writes the model to `path` in the checkpoint format.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        write_u32(&mut w, VERSION)?;
        let config = serde_json::to_vec(self.config())
            .map_err(|e| ModelError::Config(format!("config does not serialize: {}", e)))?;
        write_u32(&mut w, config.len() as u32)?;
        w.write_all(&config)?;
        let names = self.param_names();
        let params = self.params();
        write_u32(&mut w, names.len() as u32)?;
        for (name, tensor) in names.iter().zip(params) {
            write_tensor(&mut w, name, tensor)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a model from `path`, rejecting anything that is not a complete,
    /// well-formed checkpoint for its embedded configuration.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("magic bytes do not match"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(bad(format!(
                "unsupported version {} (expected {})",
                version, VERSION
            )));
        }
        let config_len = read_u32(&mut r)?;
        if config_len == 0 || config_len > MAX_NAME_LEN * 16 {
            return Err(bad(format!("config length {} out of range", config_len)));
        }
        let mut config_buf = vec![0u8; config_len as usize];
        r.read_exact(&mut config_buf)?;
        let config: BocfConfig = serde_json::from_slice(&config_buf)
            .map_err(|e| bad(format!("config does not parse: {}", e)))?;
        config.validate()?;

        let count = read_u32(&mut r)?;
        let mut tensors: HashMap<String, Tensor> = HashMap::with_capacity(count as usize);
        for _ in 0..count {
            let (name, tensor) = read_tensor(&mut r)?;
            if tensors.insert(name.clone(), tensor).is_some() {
                return Err(bad(format!("duplicate tensor '{}'", name)));
            }
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(bad("trailing bytes after tensor table"));
        }

        let model = BocfModel::from_parts(config, |name, shape| {
            let tensor = tensors
                .remove(name)
                .ok_or_else(|| bad(format!("missing tensor '{}'", name)))?;
            if tensor.shape() != shape.as_slice() {
                return Err(bad(format!(
                    "tensor '{}' has shape {:?}, config implies {:?}",
                    name,
                    tensor.shape(),
                    shape
                )));
            }
            Ok(tensor)
        })?;
        if let Some(name) = tensors.keys().next() {
            return Err(bad(format!("unexpected tensor '{}'", name)));
        }
        Ok(model)
    }
}
