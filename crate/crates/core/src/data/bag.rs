//! Binary bag codec.
//!
//! Layout (little-endian): `b"DMSB"`, `u16` version, `u32` rows, `u32`
//! columns, then `rows * columns` `f32` values in row-major order.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::FeatureBag;
use crate::error::{Error, Result};

pub const BAG_MAGIC: &[u8; 4] = b"DMSB";
pub const BAG_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

pub(crate) fn encode_bag(bag: &FeatureBag) -> Result<Vec<u8>> {
    let (n, d) = bag.features().dim();
    if bag.features().iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "bag `{}` contains non-finite values",
            bag.patient_id()
        )));
    }
    let n32 = u32::try_from(n).map_err(|_| Error::Validation(format!("too many rows: {n}")))?;
    let d32 = u32::try_from(d).map_err(|_| Error::Validation(format!("too many columns: {d}")))?;

    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * d);
    out.extend_from_slice(BAG_MAGIC);
    out.extend_from_slice(&BAG_VERSION.to_le_bytes());
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    // iter() walks in logical row-major order regardless of memory layout
    for v in bag.features().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub(crate) fn decode_bag(bytes: &[u8], patient_id: &str) -> Result<FeatureBag> {
    if bytes.len() < 4 || &bytes[..4] != BAG_MAGIC {
        return Err(Error::Format {
            field: "magic",
            detail: "expected b\"DMSB\"".into(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format {
            field: "header",
            detail: format!("need {HEADER_LEN} header bytes, found {}", bytes.len()),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BAG_VERSION {
        return Err(Error::Format {
            field: "version",
            detail: format!("unsupported version {version}, expected {BAG_VERSION}"),
        });
    }
    let n = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if n == 0 {
        return Err(Error::Format {
            field: "n",
            detail: "row count must be at least 1".into(),
        });
    }
    if d == 0 {
        return Err(Error::Format {
            field: "d",
            detail: "column count must be at least 1".into(),
        });
    }
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Format {
            field: "dimensions",
            detail: format!("{n}x{d} overflows"),
        })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Format {
            field: "payload",
            detail: format!(
                "truncated payload: {n}x{d} needs {expected} bytes, found {}",
                payload.len()
            ),
        });
    }
    if payload.len() > expected {
        return Err(Error::Format {
            field: "payload",
            detail: format!(
                "{} trailing bytes after {n}x{d} payload",
                payload.len() - expected
            ),
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let features = Array2::from_shape_vec((n, d), values).expect("length checked above");
    FeatureBag::new(patient_id, features).map_err(|e| match e {
        Error::Validation(m) => Error::Format {
            field: "payload",
            detail: m,
        },
        other => other,
    })
}

/// Writes `bag` to `path` in the binary bag format.
pub fn write_bag(bag: &FeatureBag, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_bag(bag)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a bag file. The patient id is taken from the file stem; manifest
/// loading replaces it with the manifest's id.
pub fn read_bag(path: impl AsRef<Path>) -> Result<FeatureBag> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_bag(&bytes, &id)
}
