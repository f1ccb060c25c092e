//! Raw little-endian float32 files with JSON sidecars.
//!
//! Real matrices are written as `N*N` f32 values, complex ones as `2*N*N`
//! interleaved (re, im) values, both column-major. The sidecar lives next to
//! the data file with `.json` appended and records the grid size, the kind
//! and the transform convention.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::tfcore::{AfMatrix, TfMatrix};
use crate::{Error, Result, C64};

pub const CONVENTION: &str = "unitary-centered-v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixSidecar {
    #[serde(rename = "N")]
    pub n: usize,
    pub kind: MatrixKind,
    pub convention: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Tfd,
    Af,
}

pub fn f32_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values
        .into_iter()
        .flat_map(|v| (v as f32).to_le_bytes())
        .collect()
}

pub fn complex_f32_bytes(values: &[C64]) -> Vec<u8> {
    f32_bytes(values.iter().flat_map(|v| [v.re, v.im]))
}

pub fn parse_f32(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::LengthMismatch {
            what: "float32 payload bytes",
            expected: bytes.len() / 4 * 4 + 4,
            actual: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn parse_complex_f32(bytes: &[u8]) -> Result<Vec<C64>> {
    let flat = parse_f32(bytes)?;
    if flat.len() % 2 != 0 {
        return Err(Error::LengthMismatch {
            what: "interleaved complex payload",
            expected: flat.len() + 1,
            actual: flat.len(),
        });
    }
    Ok(flat
        .chunks_exact(2)
        .map(|p| C64::new(f64::from(p[0]), f64::from(p[1])))
        .collect())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::file(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_sidecar(path: &Path, n: usize, kind: MatrixKind) -> Result<()> {
    let meta = MatrixSidecar {
        n,
        kind,
        convention: CONVENTION.to_string(),
    };
    write_bytes(&sidecar_path(path), &serde_json::to_vec_pretty(&meta)?)
}

pub fn read_sidecar(path: &Path) -> Result<MatrixSidecar> {
    let meta: MatrixSidecar = serde_json::from_slice(&read_bytes(&sidecar_path(path))?)?;
    if meta.convention != CONVENTION {
        return Err(Error::GridMismatch(format!(
            "unsupported convention `{}`",
            meta.convention
        )));
    }
    Ok(meta)
}

pub fn write_tf(path: &Path, w: &TfMatrix) -> Result<()> {
    write_bytes(path, &f32_bytes(w.as_slice().iter().copied()))?;
    write_sidecar(path, w.n(), MatrixKind::Tfd)
}

pub fn write_af(path: &Path, a: &AfMatrix) -> Result<()> {
    write_bytes(path, &complex_f32_bytes(a.as_slice()))?;
    write_sidecar(path, a.n(), MatrixKind::Af)
}

pub fn read_tf(path: &Path) -> Result<TfMatrix> {
    let meta = read_sidecar(path)?;
    if meta.kind != MatrixKind::Tfd {
        return Err(Error::GridMismatch(format!(
            "{} holds an ambiguity function, not a distribution",
            path.display()
        )));
    }
    let data = parse_f32(&read_bytes(path)?)?;
    TfMatrix::from_column_major(meta.n, data.into_iter().map(f64::from).collect())
}

pub fn read_af(path: &Path) -> Result<AfMatrix> {
    let meta = read_sidecar(path)?;
    if meta.kind != MatrixKind::Af {
        return Err(Error::GridMismatch(format!(
            "{} holds a distribution, not an ambiguity function",
            path.display()
        )));
    }
    AfMatrix::from_column_major(meta.n, parse_complex_f32(&read_bytes(path)?)?)
}
