//! Matrix, path, and trace files.
//!
//! Matrices travel in two formats. CSV holds one spatial row per line with
//! 17 significant digits, readable by anything; the binary format is exact:
//! a 16-byte header (magic `SPOD`, format version, row and column counts as
//! little-endian u32) followed by row-major little-endian f64. A matrix may
//! carry a `<stem>.meta.json` sidecar recording its grid; readers use it
//! when present so bounded or extended layouts survive the round trip.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use spod::field::{FramePath, GridSpec};
use spod::optimize::ConvergenceTrace;

use crate::fail::{CmdResult, Fail};

const MAGIC: &[u8; 4] = b"SPOD";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    Binary,
}

impl MatrixFormat {
    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::Csv => "csv",
            MatrixFormat::Binary => "spod",
        }
    }
}

impl std::str::FromStr for MatrixFormat {
    type Err = Fail;
    fn from_str(s: &str) -> Result<Self, Fail> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "binary" | "bin" | "spod" => Ok(MatrixFormat::Binary),
            other => Err(Fail::usage(format!(
                "unknown matrix format {other:?}; use csv or binary"
            ))),
        }
    }
}

/// Grid sidecar contents; mirrors [`GridSpec`].
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
struct GridMeta {
    m: usize,
    n: usize,
    dx: f64,
    dt: f64,
    periodic: bool,
    #[serde(default)]
    ext_left: usize,
    #[serde(default)]
    ext_right: usize,
}

impl GridMeta {
    fn of(grid: &GridSpec) -> Self {
        GridMeta {
            m: grid.m,
            n: grid.n,
            dx: grid.dx,
            dt: grid.dt,
            periodic: grid.periodic,
            ext_left: grid.ext_left,
            ext_right: grid.ext_right,
        }
    }

    fn to_grid(&self) -> CmdResult<GridSpec> {
        let base = if self.periodic {
            GridSpec::periodic(self.m, self.n, self.dx, self.dt)?
        } else {
            GridSpec::bounded(self.m, self.n, self.dx, self.dt)?
        };
        if self.ext_left == 0 && self.ext_right == 0 {
            return Ok(base);
        }
        Ok(base.with_extension(self.ext_left, self.ext_right)?)
    }
}

fn meta_path(matrix_path: &Path) -> PathBuf {
    matrix_path.with_extension("meta.json")
}

/// Writes `values` to `path` in the given format, plus a grid sidecar when
/// a grid is supplied.
pub fn write_matrix(
    path: &Path,
    values: &DMatrix<f64>,
    grid: Option<&GridSpec>,
    format: MatrixFormat,
) -> CmdResult<()> {
    match format {
        MatrixFormat::Csv => {
            let mut out = String::new();
            for i in 0..values.nrows() {
                for j in 0..values.ncols() {
                    if j > 0 {
                        out.push(',');
                    }
                    out.push_str(&format!("{:.16e}", values[(i, j)]));
                }
                out.push('\n');
            }
            fs::write(path, out).map_err(|e| Fail::data(format!("writing {}: {e}", path.display())))?;
        }
        MatrixFormat::Binary => {
            let rows = u32::try_from(values.nrows())
                .map_err(|_| Fail::data("matrix too large for the binary header"))?;
            let cols = u32::try_from(values.ncols())
                .map_err(|_| Fail::data("matrix too large for the binary header"))?;
            let mut buf =
                Vec::with_capacity(16 + values.len() * std::mem::size_of::<f64>());
            buf.extend_from_slice(MAGIC);
            buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
            buf.extend_from_slice(&rows.to_le_bytes());
            buf.extend_from_slice(&cols.to_le_bytes());
            for i in 0..values.nrows() {
                for j in 0..values.ncols() {
                    buf.extend_from_slice(&values[(i, j)].to_le_bytes());
                }
            }
            fs::write(path, buf).map_err(|e| Fail::data(format!("writing {}: {e}", path.display())))?;
        }
    }
    if let Some(g) = grid {
        let meta = serde_json::to_string_pretty(&GridMeta::of(g))
            .expect("grid meta serializes");
        fs::write(meta_path(path), meta)
            .map_err(|e| Fail::data(format!("writing {}: {e}", meta_path(path).display())))?;
    }
    Ok(())
}

/// Reads a matrix in either format (detected from the leading bytes) along
/// with its grid sidecar when one exists.
pub fn read_matrix(path: &Path) -> CmdResult<(DMatrix<f64>, Option<GridSpec>)> {
    let mut file =
        fs::File::open(path).map_err(|e| Fail::data(format!("opening {}: {e}", path.display())))?;
    let mut head = [0u8; 4];
    let got = file.read(&mut head).map_err(|e| Fail::data(format!("reading {}: {e}", path.display())))?;
    let mut raw = Vec::new();
    raw.extend_from_slice(&head[..got]);
    file.read_to_end(&mut raw)
        .map_err(|e| Fail::data(format!("reading {}: {e}", path.display())))?;

    let values = if raw.starts_with(MAGIC) {
        parse_binary(&raw).map_err(|m| Fail::data(format!("{}: {m}", path.display())))?
    } else {
        parse_csv(&raw).map_err(|m| Fail::data(format!("{}: {m}", path.display())))?
    };

    let meta = meta_path(path);
    let grid = if meta.exists() {
        let text = fs::read_to_string(&meta)
            .map_err(|e| Fail::data(format!("reading {}: {e}", meta.display())))?;
        let parsed: GridMeta = serde_json::from_str(&text)
            .map_err(|e| Fail::data(format!("{}: {e}", meta.display())))?;
        let grid = parsed.to_grid()?;
        if grid.rows() != values.nrows() || grid.n != values.ncols() {
            return Err(Fail::data(format!(
                "{}: sidecar grid is {}x{} but the matrix is {}x{}",
                path.display(),
                grid.rows(),
                grid.n,
                values.nrows(),
                values.ncols()
            )));
        }
        Some(grid)
    } else {
        None
    };
    Ok((values, grid))
}

fn parse_binary(raw: &[u8]) -> Result<DMatrix<f64>, String> {
    if raw.len() < 16 {
        return Err("binary matrix shorter than its 16-byte header".into());
    }
    let word = |at: usize| u32::from_le_bytes(raw[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let rows = word(8) as usize;
    let cols = word(12) as usize;
    let need = rows
        .checked_mul(cols)
        .and_then(|c| c.checked_mul(8))
        .and_then(|b| b.checked_add(16))
        .ok_or("header dimensions overflow")?;
    if raw.len() != need {
        return Err(format!(
            "payload holds {} bytes but {rows}x{cols} needs {}",
            raw.len() - 16,
            need - 16
        ));
    }
    let at = |i: usize, j: usize| {
        let off = 16 + (i * cols + j) * 8;
        f64::from_le_bytes(raw[off..off + 8].try_into().unwrap())
    };
    Ok(DMatrix::from_fn(rows, cols, at))
}

fn parse_csv(raw: &[u8]) -> Result<DMatrix<f64>, String> {
    let text = std::str::from_utf8(raw).map_err(|_| "not valid UTF-8".to_string())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("line {}: bad number {cell:?}", lineno + 1))
            })
            .collect::<Result<_, _>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(format!(
                    "line {}: {} columns, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err("no rows".into());
    }
    let (m, n) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

/// Writes the frame paths as CSV: one line per snapshot, one column per
/// frame, physical shift units.
pub fn write_paths(path: &Path, paths: &[FramePath]) -> CmdResult<()> {
    let n = paths.first().map(|p| p.len()).unwrap_or(0);
    let mut out = String::new();
    for j in 0..n {
        for (k, p) in paths.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&format!("{:.16e}", p.shifts[j]));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Fail::data(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

pub fn read_paths(path: &Path) -> CmdResult<Vec<FramePath>> {
    let raw = fs::read(path).map_err(|e| Fail::data(format!("opening {}: {e}", path.display())))?;
    let table = parse_csv(&raw).map_err(|m| Fail::data(format!("{}: {m}", path.display())))?;
    Ok((0..table.ncols())
        .map(|k| FramePath::new(table.column(k).iter().cloned().collect(), format!("path_{k}")))
        .collect())
}

/// Writes the convergence history as one JSON object per line.
pub fn write_trace(path: &Path, trace: &ConvergenceTrace) -> CmdResult<()> {
    let mut out = fs::File::create(path)
        .map_err(|e| Fail::data(format!("creating {}: {e}", path.display())))?;
    for r in &trace.records {
        let line = serde_json::json!({
            "iteration": r.iteration,
            "objective": r.objective,
            "per_frame": r.per_frame,
            "grad_norm": r.grad_norm,
            "rel_error": r.rel_error,
            "constraint_violation": r.constraint_violation,
            "svd_evals": r.svd_evals,
            "step_size": r.step_size,
            "ranks": r.ranks,
            "wall_secs": r.wall_secs,
        });
        writeln!(out, "{line}").map_err(|e| Fail::data(format!("writing {}: {e}", path.display())))?;
    }
    Ok(())
}
