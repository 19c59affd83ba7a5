//! Versioned little-endian weight file.
//!
//! Layout: 8-byte magic, then `u32` version, d, m, q, N; `u64` counts;
//! `f64` bounds (lo, hi per dimension); `f64` width; `u64` block length;
//! then `m·(N+1)` blocks ordered by mode `k = 0..=N`, state `i = 0..m`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RbfLattice, WeightVector};
use crate::error::{FdiError, Result};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"GFDIWGT\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub format_version: u32,
    pub d: usize,
    pub m: usize,
    pub q: usize,
    /// Number of trained fault modes `N`; blocks cover `k = 0..=N`.
    pub modes: usize,
    pub bounds: Vec<[f64; 2]>,
    pub counts: Vec<usize>,
    pub width: f64,
}

impl WeightHeader {
    pub fn new(lat: &RbfLattice, m: usize, q: usize, modes: usize) -> Self {
        Self {
            format_version: WEIGHT_FORMAT_VERSION,
            d: lat.dims(),
            m,
            q,
            modes,
            bounds: lat.bounds().to_vec(),
            counts: lat.counts().to_vec(),
            width: lat.width(),
        }
    }

    pub fn lattice(&self) -> Result<RbfLattice> {
        RbfLattice::new(self.bounds.clone(), self.counts.clone(), self.width)
    }

    pub fn block_len(&self) -> usize {
        self.counts.iter().product()
    }

    /// Names of fields that differ from `other`.
    pub fn diff(&self, other: &WeightHeader) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, same: bool| {
            if !same {
                out.push(name.to_string());
            }
        };
        check("format_version", self.format_version == other.format_version);
        check("d", self.d == other.d);
        check("m", self.m == other.m);
        check("q", self.q == other.q);
        check("modes", self.modes == other.modes);
        check("bounds", self.bounds == other.bounds);
        check("counts", self.counts == other.counts);
        check("width", self.width == other.width);
        out
    }

    pub fn ensure_matches(&self, expected: &WeightHeader) -> Result<()> {
        let fields = self.diff(expected);
        if fields.is_empty() {
            Ok(())
        } else {
            Err(FdiError::HeaderMismatch { fields })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub header: WeightHeader,
    pub blocks: Vec<WeightVector>,
}

impl WeightFile {
    pub fn new(header: WeightHeader, blocks: Vec<WeightVector>) -> Result<Self> {
        let expected = header.m * (header.modes + 1);
        if blocks.len() != expected {
            return Err(FdiError::Dimension {
                what: "weight blocks",
                expected,
                got: blocks.len(),
            });
        }
        for (n, b) in blocks.iter().enumerate() {
            let (k, i) = (n / header.m, n % header.m);
            if b.i != i || b.k != k {
                return Err(FdiError::WeightFormat(format!(
                    "block {n} tagged (i={}, k={}), expected (i={i}, k={k})",
                    b.i, b.k
                )));
            }
            if b.weights.len() != header.block_len() {
                return Err(FdiError::Dimension {
                    what: "weight block length",
                    expected: header.block_len(),
                    got: b.weights.len(),
                });
            }
        }
        Ok(Self { header, blocks })
    }

    pub fn block(&self, i: usize, k: usize) -> &WeightVector {
        &self.blocks[k * self.header.m + i]
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".json");
        path.with_file_name(name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::with_capacity(64 + 8 * h.block_len() * self.blocks.len());
        out.extend_from_slice(MAGIC);
        for v in [h.format_version, h.d as u32, h.m as u32, h.q as u32, h.modes as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &c in &h.counts {
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
        for b in &h.bounds {
            out.extend_from_slice(&b[0].to_le_bytes());
            out.extend_from_slice(&b[1].to_le_bytes());
        }
        out.extend_from_slice(&h.width.to_le_bytes());
        out.extend_from_slice(&(h.block_len() as u64).to_le_bytes());
        for b in &self.blocks {
            for w in &b.weights {
                out.extend_from_slice(&w.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(FdiError::WeightFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != WEIGHT_FORMAT_VERSION {
            return Err(FdiError::WeightFormat(format!(
                "unsupported format version {version} (expected {WEIGHT_FORMAT_VERSION})"
            )));
        }
        let d = r.u32()? as usize;
        let m = r.u32()? as usize;
        let q = r.u32()? as usize;
        let modes = r.u32()? as usize;
        let counts = (0..d).map(|_| r.u64().map(|c| c as usize)).collect::<Result<Vec<_>>>()?;
        let bounds = (0..d)
            .map(|_| Ok([r.f64()?, r.f64()?]))
            .collect::<Result<Vec<_>>>()?;
        let width = r.f64()?;
        let block_len = r.u64()? as usize;
        let header = WeightHeader {
            format_version: version,
            d,
            m,
            q,
            modes,
            bounds,
            counts,
            width,
        };
        if block_len != header.block_len() {
            return Err(FdiError::WeightFormat(format!(
                "block length {block_len} does not match lattice size {}",
                header.block_len()
            )));
        }
        let mut blocks = Vec::with_capacity(m * (modes + 1));
        for k in 0..=modes {
            for i in 0..m {
                let weights = (0..block_len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                blocks.push(WeightVector { i, k, weights });
            }
        }
        if r.pos != bytes.len() {
            return Err(FdiError::WeightFormat(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Self::new(header, blocks)
    }

    /// Write the binary file and its JSON header sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| FdiError::io(path, e))?;
        let side = Self::sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.header)
            .map_err(|e| FdiError::WeightFormat(e.to_string()))?;
        fs::write(&side, json + "\n").map_err(|e| FdiError::io(side, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| FdiError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(FdiError::WeightFormat("truncated file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
