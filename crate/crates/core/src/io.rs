//! Output plumbing: fixed-precision CSV, JSON files and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{FdiError, Result};

pub const CSV_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT_VERSION: u32 = 1;
/// Significant digits of every CSV number.
pub const CSV_DIGITS: usize = 9;

/// Shortest `%.9g`-style rendering; `NaN` becomes an empty field.
pub fn fmt_num(v: f64) -> String {
    let mut s = String::new();
    push_num(&mut s, v);
    s
}

pub fn push_num(out: &mut String, v: f64) {
    if v.is_nan() {
        return;
    }
    if v.is_infinite() {
        out.push_str(if v > 0.0 { "inf" } else { "-inf" });
        return;
    }
    if v == 0.0 {
        out.push('0');
        return;
    }
    let sci = format!("{:.*e}", CSV_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..CSV_DIGITS as i32).contains(&exp) {
        let decimals = (CSV_DIGITS as i32 - 1 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, v);
        out.push_str(trim_zeros(&fixed));
    } else {
        out.push_str(trim_zeros(mantissa));
        let _ = write!(out, "e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Flag(bool),
}

/// In-memory CSV with a fixed header.
#[derive(Debug, Clone)]
pub struct CsvTable {
    columns: usize,
    text: String,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut text = header.iter().map(|h| h.as_ref()).collect::<Vec<_>>().join(",");
        text.push('\n');
        Self {
            columns: header.len(),
            text,
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.columns);
        for (j, v) in values.iter().enumerate() {
            if j > 0 {
                self.text.push(',');
            }
            push_num(&mut self.text, *v);
        }
        self.text.push('\n');
    }

    /// Row of mixed cells.
    pub fn row_cells(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (j, c) in cells.iter().enumerate() {
            if j > 0 {
                self.text.push(',');
            }
            match *c {
                Cell::Num(v) => push_num(&mut self.text, v),
                Cell::Int(v) => {
                    let _ = write!(self.text, "{v}");
                }
                Cell::Flag(f) => self.text.push(if f { '1' } else { '0' }),
            }
        }
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| FdiError::Invalid(format!("json: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| FdiError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FdiError::Parse {
        file: path.to_path_buf(),
        line: Some(e.line()),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub kind: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub scenario: u32,
    pub weights: u32,
    pub csv: u32,
    pub manifest: u32,
}

/// Record of one command invocation and every file it wrote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub fault: Option<String>,
    pub formats: FormatVersions,
    pub outputs: Vec<OutputEntry>,
    /// Unix seconds at start and finish.
    pub started: u64,
    pub finished: u64,
    /// Set by `--seedless`; the pipeline never draws random numbers.
    pub seedless: bool,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Writes files under one directory and tracks them for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| FdiError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Write `bytes` to `name`; a name may be written only once per run.
    pub fn write(&mut self, name: &str, kind: &str, bytes: &[u8]) -> Result<PathBuf> {
        if self.entries.iter().any(|e| e.path == name) {
            return Err(FdiError::Invalid(format!("output {name} written twice")));
        }
        let path = self.path(name);
        let mut f = fs::File::create(&path).map_err(|e| FdiError::io(&path, e))?;
        f.write_all(bytes).map_err(|e| FdiError::io(&path, e))?;
        self.entries.push(OutputEntry {
            path: name.to_string(),
            kind: kind.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Register a file written by someone else (e.g. the weight sidecar).
    pub fn register(&mut self, name: &str, kind: &str) -> Result<()> {
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(|e| FdiError::io(&path, e))?;
        if self.entries.iter().any(|e| e.path == name) {
            return Err(FdiError::Invalid(format!("output {name} registered twice")));
        }
        self.entries.push(OutputEntry {
            path: name.to_string(),
            kind: kind.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn entries(&self) -> &[OutputEntry] {
        &self.entries
    }

    pub fn finish(self, mut manifest: RunManifest) -> Result<RunManifest> {
        manifest.outputs = self.entries;
        manifest.finished = unix_now();
        let path = self.root.join("manifest.json");
        fs::write(&path, to_json_pretty(&manifest)?).map_err(|e| FdiError::io(&path, e))?;
        Ok(manifest)
    }
}
