//! Binary field snapshots.
//!
//! Layout, all little-endian:
//!
//! | bytes      | content                                   |
//! |------------|-------------------------------------------|
//! | 4          | magic `UPAS`                              |
//! | 4          | format version, `u32`                     |
//! | 4          | dimension `d`, `u32`                      |
//! | 8 d        | cells per axis, `u64`                     |
//! | 8 d        | extent per axis, `f64`                    |
//! | 8 d        | origin per axis, `f64`                    |
//! | 8          | time, `f64`                               |
//! | 1          | species letter (`C N V A I P`) or `-`     |
//! | 8 n        | cell values, `f64`, axis 0 fastest        |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, MAX_DIM};
use crate::model::Species;

pub const MAGIC: [u8; 4] = *b"UPAS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: Field,
    pub time: f64,
    pub species: Option<Species>,
}

pub fn encode_snapshot(field: &Field, time: f64, species: Option<Species>) -> Vec<u8> {
    let g = field.grid();
    let d = g.dim();
    let mut out = Vec::with_capacity(29 + 24 * d + 8 * field.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for &c in g.cells() {
        out.extend_from_slice(&(c as u64).to_le_bytes());
    }
    for v in g.extents().iter().chain(g.origin()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&time.to_le_bytes());
    out.push(species.map_or(b'-', |s| s.letter() as u8));
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!("truncated snapshot while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("bad magic bytes, not a snapshot file".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: FORMAT_VERSION });
    }
    let dim = r.u32("dimension")? as usize;
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::Format(format!("dimension {dim} out of range")));
    }
    let mut cells = Vec::with_capacity(dim);
    for _ in 0..dim {
        let c = r.u64("cell counts")?;
        cells.push(usize::try_from(c).map_err(|_| Error::Format(format!("cell count {c} too large")))?);
    }
    let extents: Vec<f64> = (0..dim).map(|_| r.f64("extents")).collect::<Result<_>>()?;
    let origin: Vec<f64> = (0..dim).map(|_| r.f64("origin")).collect::<Result<_>>()?;
    let time = r.f64("time")?;
    let tag = r.take(1, "species tag")?[0];
    let species = match tag {
        b'-' => None,
        c => Some(Species::from_letter(c as char).ok_or_else(|| Error::Format(format!("unknown species tag {c:#04x}")))?),
    };
    let grid = Grid::with_origin(dim, &extents, &cells, &origin).map_err(|e| Error::Format(format!("invalid grid header: {e}")))?;
    let n = grid.total_cells();
    let payload = r.take(8 * n, "payload")?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after payload", bytes.len() - r.pos)));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(Snapshot { field: Field::new(grid, values)?, time, species })
}

/// Writes to a temporary sibling, then renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_snapshot(path: &Path, field: &Field, time: f64, species: Option<Species>) -> Result<()> {
    write_atomic(path, &encode_snapshot(field, time, species))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> Field {
        let g = Grid::new(2, &[1.0, 0.5], &[3, 3]).unwrap();
        Field::new(g, vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -3.5, 0.25, 5e-324, -1e-300, 42.0]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = field();
        let s = decode_snapshot(&encode_snapshot(&f, 0.75, Some(Species::V))).unwrap();
        assert_eq!(s.time, 0.75);
        assert_eq!(s.species, Some(Species::V));
        assert_eq!(s.field.grid(), f.grid());
        for (a, b) in s.field.values().iter().zip(f.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn wrong_magic_and_version() {
        let mut b = encode_snapshot(&field(), 0.0, None);
        b[0] = b'X';
        assert!(matches!(decode_snapshot(&b), Err(Error::Format(_))));
        let mut b = encode_snapshot(&field(), 0.0, None);
        b[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(decode_snapshot(&b), Err(Error::UnsupportedVersion { found: 2, expected: 1 })));
    }

    #[test]
    fn truncated_payload() {
        let b = encode_snapshot(&field(), 0.0, None);
        let err = decode_snapshot(&b[..b.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("payload"), "{err}");
    }
}
