//! Binary checkpoints of named parameter tensors.
//!
//! Layout (little endian): magic `GFCK`, format version `u32`, config JSON
//! (`u64` length + UTF-8), tensor count `u64`, then per tensor the name
//! (`u32` length + UTF-8), rows and cols (`u64` each) and row-major `f64`
//! data.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use super::params::{EncoderConfig, EncoderParams, Params};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GFCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Value,
    pub tensors: BTreeMap<String, Array2<f64>>,
}

impl Checkpoint {
    pub fn capture(config: Value, params: &dyn Params) -> Self {
        let mut tensors = BTreeMap::new();
        params.visit("", &mut |n, a| {
            tensors.insert(n, a.clone());
        });
        Checkpoint { config, tensors }
    }

    /// Copies stored tensors into `params`; names and shapes must match
    /// exactly, with nothing missing and nothing left over.
    pub fn restore_into(&self, params: &mut dyn Params) -> Result<()> {
        let mut used = 0;
        let mut err = None;
        params.visit_mut("", &mut |name, value| {
            if err.is_some() {
                return;
            }
            match self.tensors.get(&name) {
                Some(t) if t.dim() == value.dim() => {
                    value.assign(t);
                    used += 1;
                }
                Some(t) => {
                    err = Some(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {:?}, model expects {:?}",
                        t.dim(),
                        value.dim()
                    )))
                }
                None => err = Some(Error::Checkpoint(format!("missing tensor `{name}`"))),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if used != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, model uses {used}",
                self.tensors.len()
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let cfg = serde_json::to_vec(&self.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        w.write_all(&(cfg.len() as u64).to_le_bytes())?;
        w.write_all(&cfg)?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.nrows() as u64).to_le_bytes())?;
            w.write_all(&(t.ncols() as u64).to_le_bytes())?;
            for v in t.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(read_array(r)?);
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let cfg_len = read_len(r, 1 << 30)?;
        let mut cfg = vec![0u8; cfg_len];
        read_exact(r, &mut cfg)?;
        let config = serde_json::from_slice(&cfg).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let count = read_len(r, 1 << 20)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = u32::from_le_bytes(read_array(r)?) as usize;
            let mut name = vec![0u8; name_len];
            read_exact(r, &mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let rows = read_len(r, 1 << 32)?;
            let cols = read_len(r, 1 << 32)?;
            let len = rows
                .checked_mul(cols)
                .filter(|&l| l <= 1 << 31)
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is implausibly large")))?;
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(f64::from_le_bytes(read_array(r)?));
            }
            let t = Array2::from_shape_vec((rows, cols), data).expect("length checked");
            if tensors.insert(name.clone(), t).is_some() {
                return Err(Error::Checkpoint(format!("duplicate tensor `{name}`")));
            }
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
        }
        Ok(Checkpoint { config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Checkpoint("truncated checkpoint".into()),
        _ => Error::Io(e),
    })
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    read_exact(r, &mut b)?;
    Ok(b)
}

fn read_len(r: &mut impl Read, max: u64) -> Result<usize> {
    let v = u64::from_le_bytes(read_array(r)?);
    if v > max {
        return Err(Error::Checkpoint(format!("length field {v} exceeds {max}")));
    }
    Ok(v as usize)
}

/// Saves an encoder with its architecture under `config.encoder` and any
/// caller metadata under `config.meta`.
pub fn save_encoder(path: &Path, encoder: &EncoderParams, meta: Value) -> Result<()> {
    let config = serde_json::json!({ "encoder": encoder.config(), "meta": meta });
    Checkpoint::capture(config, encoder).save(path)
}

pub fn load_encoder(path: &Path) -> Result<(EncoderParams, Value)> {
    let ck = Checkpoint::load(path)?;
    let cfg: EncoderConfig = serde_json::from_value(ck.config["encoder"].clone())
        .map_err(|e| Error::Checkpoint(format!("encoder config: {e}")))?;
    let mut enc = EncoderParams::new(cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    ck.restore_into(&mut enc)?;
    Ok((enc, ck.config["meta"].clone()))
}
