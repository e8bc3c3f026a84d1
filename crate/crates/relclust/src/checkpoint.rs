//! Binary checkpoints. All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   "RELCLUST"
//! version      u32       FORMAT_VERSION
//! header_len   u32
//! header       header_len bytes of UTF-8 TOML: crate version, run config, model shape
//! arrays       u32       number of parameter arrays
//! per array:
//!   name_len   u16
//!   name       name_len bytes of UTF-8, e.g. "cycle0.sigma.w1"
//!   rank       u8
//!   dims       rank x u64
//!   values     prod(dims) x f64
//! checksum     u64       FNV-1a of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use relclust_core::seed::fnv1a64;
use relclust_core::{Model, ModelShape};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"RELCLUST";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub crate_version: String,
    pub shape: ModelShape,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(run: RunConfig, model: Model) -> Self {
        let header = Header {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            shape: *model.shape(),
            run,
        };
        Self { header, model }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header = toml::to_string(&self.header).expect("header is serializable");
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let arrays = self.model.arrays();
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, dims, values) in arrays {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(dims.len() as u8);
            for d in dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < MAGIC.len() + 8 + 8 {
            return Err("file too short".into());
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if &body[..8] != MAGIC {
            return Err("not a relclust checkpoint".into());
        }
        if fnv1a64(body) != stored {
            return Err("checksum mismatch".into());
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| "header is not UTF-8")?;
        let header: Header = toml::from_str(text).map_err(|e| format!("bad header: {e}"))?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| "array name is not UTF-8")?
                .to_owned();
            let rank = r.take(1)?[0] as usize;
            let mut len = 1usize;
            for _ in 0..rank {
                let d = usize::try_from(r.u64()?).map_err(|_| "dimension overflow")?;
                len = len.checked_mul(d).ok_or("dimension overflow")?;
            }
            let raw = r.take(len.checked_mul(8).ok_or("dimension overflow")?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            arrays.push((name, values));
        }
        if r.pos != body.len() {
            return Err(format!("{} trailing bytes", body.len() - r.pos));
        }
        let model = Model::from_arrays(header.shape, &arrays).map_err(|e| e.to_string())?;
        Ok(Self { header, model })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(Error::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(Error::io(path))?;
        Self::from_bytes(&bytes).map_err(|m| Error::format(path, 0, m))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or("unexpected end of file")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let shape = ModelShape {
            width: 5,
            hidden: 3,
            dims: [4, 0, 2],
            cycles: 2,
        };
        Checkpoint::new(RunConfig::default(), Model::init(shape, 7).unwrap())
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn header_echoes_defaults() {
        let bytes = sample().to_bytes();
        let len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&bytes[16..16 + len]).unwrap();
        for line in [
            "eta = 0.7",
            "lambda_f = 1.0",
            "lambda_d = 0.2",
            "cycles = 2",
        ] {
            assert!(header.contains(line), "{line} missing from\n{header}");
        }
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        let n = bytes.len();
        bytes[n - 20] ^= 1;
        assert!(Checkpoint::from_bytes(&bytes)
            .unwrap_err()
            .contains("checksum"));
        assert!(Checkpoint::from_bytes(&bytes[..20]).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPTxxxxxxxxxxxxxxxx").is_err());
    }
}
