//! Versioned binary container for parameter arrays.
//!
//! ```text
//! magic     b"PDCK"
//! kind      u8        1 = chord/texture VAE, 2 = arranger
//! version   u16       kind-specific format version
//! config    u32 length + UTF-8 JSON (model + training configuration)
//! params    u32 count, then per array:
//!             name u16 length + UTF-8, rows u32, cols u32, rows·cols f64
//! state     u8 flag; when 1: u32 length + UTF-8 JSON training state,
//!             then two arrays (Adam first/second moments) per parameter
//!             in the same order and shapes as `params`
//! ```
//!
//! Integers and floats are little-endian.

use std::path::Path;

use super::mat::Mat;
use super::params::ParamStore;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PDCK";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum CheckpointKind {
    Vae = 1,
    Arranger = 2,
}

/// Optimizer state carried for exact resumption.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub json: String,
    pub first_moments: Vec<Mat>,
    pub second_moments: Vec<Mat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub version: u16,
    pub config_json: String,
    pub params: Vec<(String, Mat)>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn from_store(kind: CheckpointKind, version: u16, config_json: String, store: &ParamStore) -> Self {
        Self {
            kind,
            version,
            config_json,
            params: store.iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
            optimizer: None,
        }
    }

    pub fn to_store(&self) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, m) in &self.params {
            store.add(name.clone(), m.clone());
        }
        store
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.push(self.kind as u8);
        out.extend_from_slice(&self.version.to_le_bytes());
        put_long_str(&mut out, &self.config_json);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, m) in &self.params {
            let n = &name.as_bytes()[..name.len().min(u16::MAX as usize)];
            out.extend_from_slice(&(n.len() as u16).to_le_bytes());
            out.extend_from_slice(n);
            put_mat(&mut out, m);
        }
        match &self.optimizer {
            None => out.push(0),
            Some(state) => {
                out.push(1);
                put_long_str(&mut out, &state.json);
                for (m, v) in state.first_moments.iter().zip(&state.second_moments) {
                    put_mat(&mut out, m);
                    put_mat(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { bytes, pos: 0 };
        if c.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::decode("checkpoint", 0, "bad magic"));
        }
        let kind = match c.u8()? {
            1 => CheckpointKind::Vae,
            2 => CheckpointKind::Arranger,
            k => return Err(Error::decode("checkpoint", 4, format!("unknown kind {k}"))),
        };
        let version = c.u16()?;
        let config_json = c.long_str()?;
        let n = c.u32()? as usize;
        let mut params = Vec::with_capacity(n.min(c.remaining() / 10));
        for _ in 0..n {
            let len = usize::from(c.u16()?);
            let at = c.pos;
            let name = String::from_utf8(c.take(len)?.to_vec())
                .map_err(|_| Error::decode("checkpoint", at, "parameter name is not UTF-8"))?;
            params.push((name, c.mat()?));
        }
        let optimizer = match c.u8()? {
            0 => None,
            1 => {
                let json = c.long_str()?;
                let mut first_moments = Vec::with_capacity(params.len());
                let mut second_moments = Vec::with_capacity(params.len());
                for (name, p) in &params {
                    let at = c.pos;
                    let (m, v) = (c.mat()?, c.mat()?);
                    if m.shape() != p.shape() || v.shape() != p.shape() {
                        return Err(Error::decode(
                            "checkpoint",
                            at,
                            format!("optimizer state shape mismatch for {name}"),
                        ));
                    }
                    first_moments.push(m);
                    second_moments.push(v);
                }
                Some(OptimizerState {
                    json,
                    first_moments,
                    second_moments,
                })
            }
            f => return Err(Error::decode("checkpoint", c.pos - 1, format!("bad state flag {f}"))),
        };
        if c.remaining() != 0 {
            return Err(Error::decode("checkpoint", c.pos, "trailing bytes"));
        }
        Ok(Self {
            kind,
            version,
            config_json,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_long_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_mat(out: &mut Vec<u8>, m: &Mat) {
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols as u32).to_le_bytes());
    for x in &m.data {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::decode(
                "checkpoint",
                self.pos,
                format!("need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn long_str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let at = self.pos;
        let b = self.take(len)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::decode("checkpoint", at, "text is not UTF-8"))
    }

    fn mat(&mut self) -> Result<Mat> {
        let at = self.pos;
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.remaining()))
            .ok_or_else(|| Error::decode("checkpoint", at, format!("array {rows}x{cols} exceeds file")))?;
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Mat::from_vec(rows, cols, data))
    }
}
