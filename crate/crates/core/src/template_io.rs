//! `BTM1` binary template format and a flat-directory enrollment store.
//!
//! Layout, all integers big-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "BTM1"
//! 4       2     width
//! 6       2     height
//! 8       2     resolution (dpi)
//! 10      2     minutiae count n
//! 12      6n    per minutia: kind u8, x u16, y u16, theta u8
//! ```
//!
//! Theta is quantized to 256 steps of 2π/256, rounding half up.

use std::f64::consts::TAU;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{Minutia, MinutiaKind, MinutiaeTemplate};

pub const MAGIC: &[u8; 4] = b"BTM1";
pub const HEADER_LEN: usize = 12;
pub const RECORD_LEN: usize = 6;
pub const EXTENSION: &str = "btm";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{field} value {value} does not fit its encoded width")]
    OutOfRange { field: &'static str, value: u64 },
    #[error("bad magic at offset 0")]
    BadMagic { offset: usize },
    #[error("truncated input: needed {needed} bytes at offset {offset}, have {available}")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{extra} trailing bytes after the last record at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("minutia record at offset {offset} lies outside the image or has an unknown kind")]
    BoundsViolation { offset: usize },
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid user id {0:?}: expected 1-64 chars of [A-Za-z0-9_-]")]
    InvalidUserId(String),
    #[error("unknown user {0:?}")]
    UnknownUser(String),
    #[error("storage failure at {path}: {source}")]
    StorageFailure {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Quantizes a full-circle angle to one byte.
pub fn quantize_theta(theta: f64) -> u8 {
    let steps = (theta.rem_euclid(TAU) / (TAU / 256.0) + 0.5).floor() as u32;
    (steps % 256) as u8
}

pub fn dequantize_theta(q: u8) -> f64 {
    q as f64 * (TAU / 256.0)
}

fn to_u16(field: &'static str, value: u32) -> Result<u16, FormatError> {
    u16::try_from(value).map_err(|_| FormatError::OutOfRange {
        field,
        value: value as u64,
    })
}

pub fn serialize_template(t: &MinutiaeTemplate) -> Result<Vec<u8>, FormatError> {
    let count = u16::try_from(t.len()).map_err(|_| FormatError::OutOfRange {
        field: "count",
        value: t.len() as u64,
    })?;
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&to_u16("width", t.width())?.to_be_bytes());
    out.extend_from_slice(&to_u16("height", t.height())?.to_be_bytes());
    out.extend_from_slice(&to_u16("resolution", t.resolution())?.to_be_bytes());
    out.extend_from_slice(&count.to_be_bytes());
    for m in t.minutiae() {
        out.push(m.kind.code());
        out.extend_from_slice(&to_u16("x", m.x)?.to_be_bytes());
        out.extend_from_slice(&to_u16("y", m.y)?.to_be_bytes());
        out.push(quantize_theta(m.theta));
    }
    Ok(out)
}

fn be16(bytes: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([bytes[at], bytes[at + 1]])
}

pub fn parse_template(bytes: &[u8]) -> Result<MinutiaeTemplate, FormatError> {
    if bytes.len() < HEADER_LEN {
        // a short prefix that disagrees with the magic is still a magic error
        let n = bytes.len().min(MAGIC.len());
        if bytes[..n] != MAGIC[..n] {
            return Err(FormatError::BadMagic { offset: 0 });
        }
        return Err(FormatError::Truncated {
            offset: 0,
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic { offset: 0 });
    }
    let width = be16(bytes, 4) as u32;
    let height = be16(bytes, 6) as u32;
    let resolution = be16(bytes, 8) as u32;
    let count = be16(bytes, 10) as usize;
    let expected = HEADER_LEN + RECORD_LEN * count;
    if bytes.len() < expected {
        let complete = (bytes.len() - HEADER_LEN) / RECORD_LEN;
        let offset = HEADER_LEN + complete * RECORD_LEN;
        return Err(FormatError::Truncated {
            offset,
            needed: expected - offset,
            available: bytes.len() - offset,
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes {
            offset: expected,
            extra: bytes.len() - expected,
        });
    }
    let mut minutiae = Vec::with_capacity(count);
    for i in 0..count {
        let at = HEADER_LEN + i * RECORD_LEN;
        let kind = MinutiaKind::from_code(bytes[at]).ok_or(FormatError::BoundsViolation { offset: at })?;
        let x = be16(bytes, at + 1) as u32;
        let y = be16(bytes, at + 3) as u32;
        if x >= width || y >= height {
            return Err(FormatError::BoundsViolation { offset: at });
        }
        minutiae.push(Minutia::new(x, y, dequantize_theta(bytes[at + 5]), kind));
    }
    MinutiaeTemplate::with_minutiae(width, height, resolution, minutiae)
        .map_err(|_| FormatError::BoundsViolation { offset: HEADER_LEN })
}

/// Returns `t` with every theta snapped to the stored quantization grid.
pub fn quantized(t: &MinutiaeTemplate) -> MinutiaeTemplate {
    let ms = t
        .minutiae()
        .iter()
        .map(|m| Minutia::new(m.x, m.y, dequantize_theta(quantize_theta(m.theta)), m.kind))
        .collect();
    MinutiaeTemplate::with_minutiae(t.width(), t.height(), t.resolution(), ms)
        .expect("quantization keeps minutiae in bounds")
}

pub fn read_template_file(path: &Path) -> Result<MinutiaeTemplate, StoreError> {
    let bytes = fs::read(path).map_err(|source| StoreError::StorageFailure {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_template(&bytes)?)
}

/// Writes via a sibling temp file and rename, so readers never see a torn file.
pub fn write_template_file(path: &Path, t: &MinutiaeTemplate) -> Result<(), StoreError> {
    let bytes = serialize_template(t)?;
    let fail = |source| StoreError::StorageFailure {
        path: path.to_path_buf(),
        source,
    };
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(fail)?;
        f.write_all(&bytes).map_err(fail)?;
        f.sync_all().map_err(fail)?;
    }
    fs::rename(&tmp, path).map_err(fail)
}

pub fn valid_user_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Enrollment database: one `<user_id>.btm` file per user in `root`.
#[derive(Debug, Clone)]
pub struct TemplateStore {
    root: PathBuf,
}

impl TemplateStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|source| StoreError::StorageFailure {
            path: root.clone(),
            source,
        })?;
        Ok(TemplateStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_for(&self, user: &str) -> Result<PathBuf, StoreError> {
        if !valid_user_id(user) {
            return Err(StoreError::InvalidUserId(user.to_string()));
        }
        Ok(self.root.join(format!("{user}.{EXTENSION}")))
    }

    pub fn enroll(&self, user: &str, t: &MinutiaeTemplate) -> Result<(), StoreError> {
        let path = self.path_for(user)?;
        write_template_file(&path, t)
    }

    pub fn lookup(&self, user: &str) -> Result<MinutiaeTemplate, StoreError> {
        let path = self.path_for(user)?;
        if !path.exists() {
            return Err(StoreError::UnknownUser(user.to_string()));
        }
        read_template_file(&path)
    }

    /// Enrolled user ids, sorted.
    pub fn users(&self) -> Result<Vec<String>, StoreError> {
        let entries = fs::read_dir(&self.root).map_err(|source| StoreError::StorageFailure {
            path: self.root.clone(),
            source,
        })?;
        let mut users: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                let stem = name.strip_suffix(".btm")?;
                valid_user_id(stem).then(|| stem.to_string())
            })
            .collect();
        users.sort();
        Ok(users)
    }
}
