//! Binary `P5` graymaps with maxval 255.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::GrayImage;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary graymap: missing P5 magic")]
    BadMagic,
    #[error("malformed header: {0}")]
    BadHeader(&'static str),
    #[error("maxval {0} unsupported; only 255 is accepted")]
    BadMaxval(u32),
    #[error("pixel data holds {got} bytes, expected {want}")]
    Truncated { got: usize, want: usize },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// Accepts `#` comments and any whitespace between header fields, as the
/// format allows. Trailing bytes after the raster are ignored.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::BadMagic);
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for f in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(PgmError::BadHeader("ends early")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::BadHeader("expected a number"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *f = text.parse().map_err(|_| PgmError::BadHeader("number out of range"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(PgmError::BadHeader("no separator after maxval"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(PgmError::BadMaxval(maxval));
    }
    if w == 0 || h == 0 {
        return Err(PgmError::BadHeader("zero dimension"));
    }
    let want = (w as usize)
        .checked_mul(h as usize)
        .ok_or(PgmError::BadHeader("dimensions overflow"))?;
    let data = &bytes[pos..];
    if data.len() < want {
        return Err(PgmError::Truncated { got: data.len(), want });
    }
    Ok(GrayImage::from_pixels(w as usize, h as usize, data[..want].to_vec()).expect("length checked"))
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, PgmError> {
    let bytes = fs::read(path).map_err(|source| PgmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), PgmError> {
    fs::write(path, encode_pgm(img)).map_err(|source| PgmError::Io {
        path: path.to_path_buf(),
        source,
    })
}
