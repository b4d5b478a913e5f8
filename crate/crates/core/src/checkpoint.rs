//! Self-describing binary container for named tensors plus string metadata.
//!
//! Used for model/optimizer checkpoints. Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "MTAGCP01" (the trailing digits are the format version)
//! precision u8       element width in bytes: 4 = f32, 8 = f64
//! n_meta    u32      then per entry: u16 key_len, key, u32 val_len, value (UTF-8)
//! n_tensors u32      then per entry: u16 name_len, name, u8 ndim,
//!                    u32 x ndim dims, dims-product elements (IEEE-754 LE)
//! ```
//!
//! Entries are written in insertion order and read back verbatim, so a
//! write/read/write cycle is byte-identical and two implementations that
//! follow this layout interchange checkpoints exactly.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"MTAGCP01";

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint holds {found}-byte elements but this run uses {expected}-byte")]
    PrecisionMismatch { found: u8, expected: u8 },
    #[error("truncated checkpoint: {0}")]
    Truncated(&'static str),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry<T: Scalar> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container<T: Scalar> {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<TensorEntry<T>>,
}

impl<T: Scalar> Container<T> {
    pub fn new() -> Self {
        Container { meta: Vec::new(), tensors: Vec::new() }
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.meta.push((key.into(), value.into()));
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<T>) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.tensors.push(TensorEntry { name: name.into(), shape: shape.to_vec(), values });
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorEntry<T>> {
        self.tensors.iter().find(|e| e.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(T::BYTES as u8);
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            out.extend_from_slice(&(k.len() as u16).to_le_bytes());
            out.extend_from_slice(k.as_bytes());
            out.extend_from_slice(&(v.len() as u32).to_le_bytes());
            out.extend_from_slice(v.as_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for e in &self.tensors {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.shape.len() as u8);
            for &d in &e.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &e.values {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, at: 0 };
        if cur.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let prec = cur.take(1)?[0];
        if prec as usize != T::BYTES {
            return Err(CheckpointError::PrecisionMismatch { found: prec, expected: T::BYTES as u8 });
        }
        let n_meta = cur.u32()? as usize;
        let mut meta = Vec::with_capacity(n_meta);
        for _ in 0..n_meta {
            let klen = cur.u16()? as usize;
            let key = cur.utf8(klen)?;
            let vlen = cur.u32()? as usize;
            let value = cur.utf8(vlen)?;
            meta.push((key, value));
        }
        let n_tensors = cur.u32()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let nlen = cur.u16()? as usize;
            let name = cur.utf8(nlen)?;
            let ndim = cur.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.u32()? as usize);
            }
            let numel: usize = shape.iter().product();
            let raw = cur.take(numel * T::BYTES)?;
            let values: Vec<T> = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            tensors.push(TensorEntry { name, shape, values });
        }
        if cur.at != bytes.len() {
            return Err(CheckpointError::Malformed(format!(
                "{} trailing bytes",
                bytes.len() - cur.at
            )));
        }
        Ok(Container { meta, tensors })
    }

    /// Write atomically: temp file in the same directory, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes();
        write_atomic(path, &bytes).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }
}

/// Temp-file-then-rename write, shared by every artifact the tools produce.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(CheckpointError::Truncated("unexpected end of file"));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn utf8(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|e| CheckpointError::Malformed(format!("bad utf-8: {}", e)))
    }
}
