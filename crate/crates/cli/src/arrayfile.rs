//! Binary array files.
//!
//! Layout: magic `FDSI`, format version (u32 LE), rank (u32 LE), one u32 LE
//! per dimension, the payload as f64 LE in row-major order, then a u64 LE
//! checksum equal to the wrapping sum of the payload bit patterns.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

pub const MAGIC: &[u8; 4] = b"FDSI";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFile {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn checksum(data: &[f64]) -> u64 {
    data.iter().fold(0u64, |acc, v| acc.wrapping_add(v.to_bits()))
}

impl ArrayFile {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> CliResult<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(CliError::Runtime(format!(
                "array of shape {dims:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            dims: vec![data.len()],
            data,
        }
    }

    /// Rows of equal length as a rank-2 array.
    pub fn from_rows(rows: &[Vec<f64>]) -> CliResult<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(CliError::Runtime("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            data.extend(m.row(r).iter());
        }
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data,
        }
    }

    pub fn to_rows(&self) -> CliResult<Vec<Vec<f64>>> {
        match self.dims[..] {
            [r, c] => Ok((0..r).map(|i| self.data[i * c..(i + 1) * c].to_vec()).collect()),
            _ => Err(CliError::Runtime(format!("expected a rank-2 array, got {:?}", self.dims))),
        }
    }

    pub fn to_matrix(&self) -> CliResult<DMatrix<f64>> {
        match self.dims[..] {
            [r, c] => Ok(DMatrix::from_row_slice(r, c, &self.data)),
            _ => Err(CliError::Runtime(format!("expected a rank-2 array, got {:?}", self.dims))),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&checksum(&self.data).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], name: &str) -> CliResult<Self> {
        let corrupt = |detail: &str| CliError::Corrupt {
            path: name.to_string(),
            detail: detail.to_string(),
        };
        let u32_at = |off: usize| -> CliResult<u32> {
            bytes
                .get(off..off + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or_else(|| corrupt("truncated header"))
        };
        if bytes.get(..4) != Some(&MAGIC[..]) {
            return Err(corrupt("bad magic"));
        }
        let version = u32_at(4)?;
        if version != FORMAT_VERSION {
            return Err(corrupt(&format!("unsupported format version {version}")));
        }
        let rank = u32_at(8)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for k in 0..rank {
            dims.push(u32_at(12 + 4 * k)? as usize);
        }
        let start = 12 + 4 * rank;
        let n: usize = dims.iter().product();
        if bytes.len() != start + 8 * n + 8 {
            return Err(corrupt("declared size does not match the payload"));
        }
        let data: Vec<f64> = bytes[start..start + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let stored = u64::from_le_bytes(bytes[start + 8 * n..].try_into().expect("8 bytes"));
        if stored != checksum(&data) {
            return Err(corrupt("checksum mismatch"));
        }
        Ok(Self { dims, data })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_bytes(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
    }
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(format!("creating {}", tmp.display()), e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| CliError::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(format!("renaming {}", tmp.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_corruption() {
        let a = ArrayFile::new(vec![2, 3], vec![1.0, -2.5, 0.0, f64::MIN_POSITIVE, 1e300, -0.0]).unwrap();
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..4], b"FDSI");
        assert_eq!(ArrayFile::from_bytes(&bytes, "a").unwrap(), a);
        let mut bad = bytes.clone();
        bad[20] ^= 1;
        assert!(matches!(ArrayFile::from_bytes(&bad, "a"), Err(CliError::Corrupt { .. })));
        assert!(ArrayFile::from_bytes(&bytes[..bytes.len() - 1], "a").is_err());
        let m = a.to_matrix().unwrap();
        assert_eq!(ArrayFile::from_matrix(&m), a);
        assert_eq!(ArrayFile::from_rows(&a.to_rows().unwrap()).unwrap(), a);
    }

    #[test]
    fn checksum_wraps() {
        let v = [f64::from_bits(u64::MAX), f64::from_bits(2)];
        assert_eq!(checksum(&v), 1);
    }
}
