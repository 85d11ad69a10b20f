//! HJVF binary value-function files.
//!
//! Layout, all little-endian: magic `HJVF`, u32 version, u32 dim count,
//! then per dim f64 min, f64 max, u64 node count, u8 periodic flag, then
//! f64 horizon, u8 mode, then the values as f64 in row-major order.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::grid::{Axis, Grid, ScalarField};
use crate::hjsolver::{SolveMode, ValueFunction};

pub const MAGIC: [u8; 4] = *b"HJVF";
pub const VERSION: u32 = 1;

const AXIS_BYTES: usize = 8 + 8 + 8 + 1;

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not an HJVF file (magic {found:?})")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported HJVF version {found}, expected {VERSION}")]
    VersionMismatch { found: u32 },
    #[error("truncated HJVF payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("malformed HJVF header: {0}")]
    Malformed(String),
}

pub fn encode_field(vf: &ValueFunction) -> Vec<u8> {
    let grid = vf.grid();
    let mut out = Vec::with_capacity(4 + 4 + 4 + grid.dim_count() * AXIS_BYTES + 9 + grid.len() * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.dim_count() as u32).to_le_bytes());
    for a in grid.axes() {
        out.extend_from_slice(&a.min.to_le_bytes());
        out.extend_from_slice(&a.max.to_le_bytes());
        out.extend_from_slice(&(a.nodes as u64).to_le_bytes());
        out.push(a.periodic as u8);
    }
    out.extend_from_slice(&vf.horizon.to_le_bytes());
    out.push(vf.mode.as_byte());
    for v in vf.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, header_end: usize) -> Result<&'a [u8], FieldIoError> {
        match self.bytes.get(self.pos..self.pos + n) {
            Some(s) => {
                self.pos += n;
                Ok(s)
            }
            None => Err(FieldIoError::TruncatedPayload {
                expected: header_end.max(self.pos + n) as u64,
                found: self.bytes.len() as u64,
            }),
        }
    }

    fn u32(&mut self, header_end: usize) -> Result<u32, FieldIoError> {
        Ok(u32::from_le_bytes(self.take(4, header_end)?.try_into().unwrap()))
    }

    fn u64(&mut self, header_end: usize) -> Result<u64, FieldIoError> {
        Ok(u64::from_le_bytes(self.take(8, header_end)?.try_into().unwrap()))
    }

    fn f64(&mut self, header_end: usize) -> Result<f64, FieldIoError> {
        Ok(f64::from_le_bytes(self.take(8, header_end)?.try_into().unwrap()))
    }

    fn u8(&mut self, header_end: usize) -> Result<u8, FieldIoError> {
        Ok(self.take(1, header_end)?[0])
    }
}

pub fn decode_field(bytes: &[u8]) -> Result<ValueFunction, FieldIoError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(FieldIoError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32(12)?;
    if version != VERSION {
        return Err(FieldIoError::VersionMismatch { found: version });
    }
    let dims = r.u32(12)? as usize;
    if dims == 0 || dims > crate::grid::MAX_DIMS {
        return Err(FieldIoError::Malformed(format!("dimension count {dims}")));
    }
    let header_end = 12 + dims * AXIS_BYTES + 9;
    let mut axes = Vec::with_capacity(dims);
    for _ in 0..dims {
        let min = r.f64(header_end)?;
        let max = r.f64(header_end)?;
        let nodes = r.u64(header_end)?;
        let periodic = match r.u8(header_end)? {
            0 => false,
            1 => true,
            b => return Err(FieldIoError::Malformed(format!("periodic flag {b}"))),
        };
        let nodes = usize::try_from(nodes).map_err(|_| FieldIoError::Malformed(format!("node count {nodes}")))?;
        axes.push(Axis {
            min,
            max,
            nodes,
            periodic,
        });
    }
    let horizon = r.f64(header_end)?;
    let mode_byte = r.u8(header_end)?;
    let mode = SolveMode::from_byte(mode_byte).ok_or_else(|| FieldIoError::Malformed(format!("mode byte {mode_byte}")))?;

    let count = axes
        .iter()
        .try_fold(1u64, |acc, a| acc.checked_mul(a.nodes as u64))
        .ok_or_else(|| FieldIoError::Malformed("node count overflows".into()))?;
    let expected = (header_end as u64).saturating_add(count.saturating_mul(8));
    if bytes.len() as u64 != expected {
        return Err(FieldIoError::TruncatedPayload {
            expected,
            found: bytes.len() as u64,
        });
    }
    let grid = Grid::new(axes).map_err(|e| FieldIoError::Malformed(e.to_string()))?;
    let values = bytes[header_end..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let field = ScalarField::new(grid, values).map_err(|e| FieldIoError::Malformed(e.to_string()))?;
    Ok(ValueFunction::from_field(field, horizon, mode))
}

pub fn write_field(vf: &ValueFunction, path: impl AsRef<Path>) -> Result<(), FieldIoError> {
    let path = path.as_ref();
    fs::write(path, encode_field(vf)).map_err(|e| FieldIoError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ValueFunction, FieldIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FieldIoError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    decode_field(&bytes)
}
