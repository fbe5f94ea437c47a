//! On-disk formats: ladder CSV, JSON summaries and binary field dumps.
//!
//! A field dump is one line of JSON header followed by the raw values as
//! little-endian `f64`, time-outer and row-major in space (`x` fastest).
//! Spatial fields are written with `nt = 1`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volgeo_core::diagnostics::{LadderReport, LadderRow};
use volgeo_core::{Field, Grid, Layered, SpatialField, Torus};

use crate::error::{CliError, Result};

pub const LAYOUT: &str = "time-outer-row-major";
pub const DTYPE: &str = "f64le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dim: usize,
    pub nx: usize,
    pub nt: usize,
    pub length: f64,
    pub layout: String,
    pub dtype: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub header: FieldHeader,
    pub values: Vec<f64>,
}

impl FieldDump {
    fn mismatch(&self, path: &Path, dim: usize, nx: usize, nt: usize, length: f64) -> CliError {
        let h = &self.header;
        CliError::Format {
            path: path.to_path_buf(),
            message: format!(
                "dump is dim={} nx={} nt={} length={}, expected dim={dim} nx={nx} nt={nt} length={length}",
                h.dim, h.nx, h.nt, h.length
            ),
        }
    }

    pub fn check_grid(&self, path: &Path, grid: &Grid) -> Result<()> {
        let h = &self.header;
        let l = grid.torus().length();
        if (h.dim, h.nx, h.nt, h.length) != (grid.dim(), grid.nx(), grid.nt(), l) {
            return Err(self.mismatch(path, grid.dim(), grid.nx(), grid.nt(), l));
        }
        Ok(())
    }

    pub fn check_spatial(&self, path: &Path, torus: &Torus) -> Result<()> {
        let h = &self.header;
        let l = torus.length();
        if (h.dim, h.nx, h.nt, h.length) != (torus.dim(), torus.nx(), 1, l) {
            return Err(self.mismatch(path, torus.dim(), torus.nx(), 1, l));
        }
        Ok(())
    }
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

fn encode(header: &FieldHeader, values: &[f64]) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(header).expect("serializable header");
    bytes.push(b'\n');
    bytes.reserve(8 * values.len());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn write_field(path: &Path, u: &Field) -> Result<()> {
    let g = u.grid();
    let header = FieldHeader {
        dim: g.dim(),
        nx: g.nx(),
        nt: g.nt(),
        length: g.torus().length(),
        layout: LAYOUT.into(),
        dtype: DTYPE.into(),
    };
    fs::write(path, encode(&header, u.values())).map_err(write_err(path))
}

pub fn write_spatial(path: &Path, v: &SpatialField) -> Result<()> {
    let t = v.torus();
    let header = FieldHeader {
        dim: t.dim(),
        nx: t.nx(),
        nt: 1,
        length: t.length(),
        layout: LAYOUT.into(),
        dtype: DTYPE.into(),
    };
    fs::write(path, encode(&header, v.values())).map_err(write_err(path))
}

pub fn read_field(path: &Path) -> Result<FieldDump> {
    let bytes = fs::read(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |message: String| CliError::Format {
        path: path.to_path_buf(),
        message,
    };
    let split = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line".into()))?;
    let header: FieldHeader =
        serde_json::from_slice(&bytes[..split]).map_err(|e| bad(format!("header: {e}")))?;
    if header.layout != LAYOUT || header.dtype != DTYPE {
        return Err(bad(format!(
            "unsupported layout/dtype {}/{}",
            header.layout, header.dtype
        )));
    }
    let body = &bytes[split + 1..];
    let expected = header.nx.pow(header.dim as u32) * header.nt;
    if body.len() != 8 * expected {
        return Err(bad(format!(
            "expected {expected} values, found {} bytes",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(FieldDump { header, values })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable summary");
    text.push('\n');
    fs::write(path, text).map_err(write_err(path))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(write_err(dir))
}

fn row_record(row: &LadderRow) -> Vec<String> {
    LadderRow::COLUMNS
        .iter()
        .zip(row.values())
        .map(|(name, v)| match *name {
            "converged" => row.converged.to_string(),
            "newton_iterations" => row.newton_iterations.to_string(),
            _ => format!("{v:.16e}"),
        })
        .collect()
}

/// Header `LadderRow::COLUMNS`, one row per rung; floats in `{:.16e}`.
pub fn write_ladder_csv(path: &Path, report: &LadderReport) -> Result<()> {
    let file = fs::File::create(path).map_err(write_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(LadderRow::COLUMNS)?;
    for row in &report.rows {
        w.write_record(row_record(row))?;
    }
    w.flush().map_err(write_err(path))?;
    Ok(())
}

/// One ladder CSV as `(column, values)` pairs per row.
pub struct LadderTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_ladder_csv(path: &Path) -> Result<LadderTable> {
    let bad = |message: String| CliError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CliError::Read {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        },
        _ => bad(e.to_string()),
    })?;
    let columns: Vec<String> = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.first().map(String::as_str) != Some("level") {
        return Err(bad("first column must be `level`".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(LadderTable { columns, rows })
}

/// Long format: `source,level,column,value`.
pub fn write_long_csv(path: &Path, tables: &[(PathBuf, LadderTable)]) -> Result<()> {
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["source", "level", "column", "value"])?;
        for (source, table) in tables {
            let src = source.display().to_string();
            for row in &table.rows {
                for (name, value) in table.columns.iter().zip(row).skip(1) {
                    w.write_record([src.as_str(), row[0].as_str(), name, value])?;
                }
            }
        }
        w.flush().map_err(write_err(path))?;
    }
    let mut f = fs::File::create(path).map_err(write_err(path))?;
    f.write_all(&out).map_err(write_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::with_shape(2, 8, 5, 2.0).unwrap();
        let u = Field::from_fn(grid, |x, t| x[0] - 3.0 * x[1] + t * t);
        let path = dir.path().join("u.field");
        write_field(&path, &u).unwrap();
        let dump = read_field(&path).unwrap();
        dump.check_grid(&path, &grid).unwrap();
        assert_eq!(dump.values, u.values());
        assert!(dump.check_spatial(&path, grid.torus()).is_err());

        let v = u.spatial_layer(3);
        write_spatial(&path, &v).unwrap();
        let dump = read_field(&path).unwrap();
        dump.check_spatial(&path, grid.torus()).unwrap();
        assert_eq!(dump.values, v.values());
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::with_shape(1, 8, 5, 1.0).unwrap();
        let path = dir.path().join("u.field");
        write_field(&path, &Field::zeros(grid)).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_field(&path), Err(CliError::Format { .. })));
    }
}
