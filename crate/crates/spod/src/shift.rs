//! Transport operator: per-snapshot spatial shifts of a field.
//!
//! The forward direction displaces frame content along its path, producing
//! the laboratory view of a co-moving frame; the inverse direction undoes the
//! displacement, pulling laboratory data into the frame. Shifts act column by
//! column and are independent across snapshots, which is what makes the whole
//! scheme cheap: each column is a 1-d resample of the previous one.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::{FramePath, GridSpec, SnapshotField};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftMode {
    /// Shifts must be whole cells; columns are moved by index. No
    /// interpolation error, and forward/inverse are exact inverses on
    /// periodic grids.
    Exact,
    /// Lagrange interpolation of order `order` on the resampled positions.
    Interpolated,
}

/// What a bounded grid reads past its last row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgePolicy {
    /// Repeat the boundary value.
    Replicate,
    /// Read a fixed value.
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftConfig {
    pub mode: ShiftMode,
    /// Stencil width of the Lagrange interpolation; 2 is linear. Must be
    /// even. Ignored in exact mode.
    pub order: usize,
    /// Ignored on periodic grids, which wrap.
    pub edge: EdgePolicy,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        ShiftConfig {
            mode: ShiftMode::Interpolated,
            order: 2,
            edge: EdgePolicy::Replicate,
        }
    }
}

impl ShiftConfig {
    pub fn exact() -> Self {
        ShiftConfig {
            mode: ShiftMode::Exact,
            ..ShiftConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mode == ShiftMode::Interpolated && (self.order < 2 || self.order % 2 != 0) {
            return Err(Error::InvalidConfig(format!(
                "interpolation order must be even and at least 2, got {}",
                self.order
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Column `j` is displaced by `+shifts[j]`: frame to laboratory.
    Forward,
    /// Column `j` is displaced by `-shifts[j]`: laboratory to frame.
    Inverse,
}

/// Offsets that are this close to a whole cell are treated as whole cells.
const INTEGER_TOL: f64 = 1e-9;

/// Shifts every column of `values` along `path`. Shape is preserved; the
/// grid only supplies `dx`, periodicity, and the row count.
pub fn apply_matrix(
    values: &DMatrix<f64>,
    grid: &GridSpec,
    path: &FramePath,
    direction: Direction,
    cfg: &ShiftConfig,
) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    if path.len() != values.ncols() {
        return Err(Error::PathLength {
            got: path.len(),
            expected: values.ncols(),
        });
    }
    if values.nrows() != grid.rows() {
        return Err(Error::ShapeMismatch {
            rows: values.nrows(),
            cols: values.ncols(),
            expected_rows: grid.rows(),
            expected_cols: values.ncols(),
        });
    }

    // Column j of the output samples the input at row offset `offsets[j]`:
    // displacing content by +delta means reading from -delta.
    let sign = match direction {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let offsets: Vec<f64> = path.cells(grid.dx).map(|c| sign * c).collect();

    if cfg.mode == ShiftMode::Exact {
        for (j, &off) in offsets.iter().enumerate() {
            if (off - off.round()).abs() > INTEGER_TOL {
                return Err(Error::NonIntegerShift {
                    col: j,
                    cells: off.abs(),
                });
            }
        }
    }

    let mut out = DMatrix::zeros(values.nrows(), values.ncols());
    par::for_each_column_pair(values, &mut out, |j, src, dst| {
        shift_column(src, dst, offsets[j], grid.periodic, cfg);
    });
    Ok(out)
}

/// [`apply_matrix`] on a field; the result lives on the same grid.
pub fn apply(
    field: &SnapshotField,
    path: &FramePath,
    direction: Direction,
    cfg: &ShiftConfig,
) -> Result<SnapshotField> {
    let values = apply_matrix(&field.values, &field.grid, path, direction, cfg)?;
    Ok(SnapshotField::new_unchecked(field.grid.clone(), values))
}

fn shift_column(src: &[f64], dst: &mut [f64], offset: f64, periodic: bool, cfg: &ShiftConfig) {
    let near_integer = (offset - offset.round()).abs() <= INTEGER_TOL;
    if cfg.mode == ShiftMode::Exact || near_integer {
        shift_column_integer(src, dst, offset.round() as isize, periodic, cfg);
        return;
    }

    let p = cfg.order;
    let base = offset.floor();
    let frac = offset - base;
    // Stencil of p consecutive nodes starting (p/2 - 1) cells left of the
    // floor; the sample sits at local coordinate xi within it.
    let start = base as isize - (p as isize / 2 - 1);
    let xi = (p / 2 - 1) as f64 + frac;
    let mut w = vec![0.0; p];
    for l in 0..p {
        let mut acc = 1.0;
        for k in 0..p {
            if k != l {
                acc *= (xi - k as f64) / (l as f64 - k as f64);
            }
        }
        w[l] = acc;
    }

    let rows = src.len() as isize;
    for (i, d) in dst.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (l, &wl) in w.iter().enumerate() {
            acc += wl * fetch(src, i as isize + start + l as isize, rows, periodic, cfg);
        }
        *d = acc;
    }
}

fn shift_column_integer(src: &[f64], dst: &mut [f64], step: isize, periodic: bool, cfg: &ShiftConfig) {
    let rows = src.len() as isize;
    for (i, d) in dst.iter_mut().enumerate() {
        *d = fetch(src, i as isize + step, rows, periodic, cfg);
    }
}

#[inline]
fn fetch(src: &[f64], idx: isize, rows: isize, periodic: bool, cfg: &ShiftConfig) -> f64 {
    if (0..rows).contains(&idx) {
        return src[idx as usize];
    }
    if periodic {
        return src[idx.rem_euclid(rows) as usize];
    }
    match cfg.edge {
        EdgePolicy::Replicate => src[idx.clamp(0, rows - 1) as usize],
        EdgePolicy::Constant(c) => c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spike_field(m: usize, n: usize, row: usize) -> SnapshotField {
        let grid = GridSpec::periodic(m, n, 1.0, 1.0).unwrap();
        let mut values = DMatrix::zeros(m, n);
        for j in 0..n {
            values[(row, j)] = 1.0;
        }
        SnapshotField::new(grid, values).unwrap()
    }

    #[test]
    fn forward_moves_content_toward_larger_x() {
        let f = spike_field(8, 3, 2);
        let path = FramePath::new(vec![0.0, 1.0, 2.0], "unit");
        let out = apply(&f, &path, Direction::Forward, &ShiftConfig::exact()).unwrap();
        assert_eq!(out.values[(2, 0)], 1.0);
        assert_eq!(out.values[(3, 1)], 1.0);
        assert_eq!(out.values[(4, 2)], 1.0);
        assert_eq!(out.values[(2, 1)], 0.0);
    }

    #[test]
    fn inverse_undoes_forward_exactly_on_periodic_grids() {
        let grid = GridSpec::periodic(16, 5, 0.5, 1.0).unwrap();
        let values = DMatrix::from_fn(16, 5, |i, j| ((3 * i + 7 * j) % 11) as f64);
        let f = SnapshotField::new(grid.clone(), values.clone()).unwrap();
        let path = FramePath::new(vec![0.0, 0.5, 1.0, -1.5, 20.0], "mixed");
        let cfg = ShiftConfig::exact();
        let there = apply(&f, &path, Direction::Forward, &cfg).unwrap();
        let back = apply(&there, &path, Direction::Inverse, &cfg).unwrap();
        assert_eq!(back.values, values);
    }

    #[test]
    fn exact_mode_rejects_fractional_cells() {
        let f = spike_field(8, 2, 1);
        let path = FramePath::new(vec![0.0, 0.3], "frac");
        let err = apply(&f, &path, Direction::Forward, &ShiftConfig::exact()).unwrap_err();
        assert!(matches!(err, Error::NonIntegerShift { col: 1, .. }));
    }

    #[test]
    fn wrap_around_is_circular() {
        let f = spike_field(5, 2, 4);
        let path = FramePath::new(vec![0.0, 2.0], "wrap");
        let out = apply(&f, &path, Direction::Forward, &ShiftConfig::exact()).unwrap();
        assert_eq!(out.values[(1, 1)], 1.0);
        assert_eq!(out.values[(4, 1)], 0.0);
    }

    #[test]
    fn linear_interpolation_averages_neighbours() {
        let grid = GridSpec::bounded(5, 2, 1.0, 1.0).unwrap();
        let values = DMatrix::from_fn(5, 2, |i, _| (i * i) as f64);
        let f = SnapshotField::new(grid, values).unwrap();
        let path = FramePath::new(vec![0.0, 0.5], "half");
        let out = apply(&f, &path, Direction::Forward, &ShiftConfig::default()).unwrap();
        // Content moves +0.5, so row 2 reads halfway between rows 1 and 2.
        assert_relative_eq!(out.values[(2, 1)], 0.5 * (1.0 + 4.0));
    }

    #[test]
    fn lagrange_stencils_reproduce_polynomials_of_matching_degree() {
        let grid = GridSpec::bounded(32, 2, 1.0, 1.0).unwrap();
        for order in [2usize, 4, 6] {
            let deg = order - 1;
            let poly = |x: f64| (0..=deg).map(|k| 0.3 * (k as f64 + 1.0) * x.powi(k as i32)).sum::<f64>();
            let values = DMatrix::from_fn(32, 2, |i, _| poly(i as f64));
            let f = SnapshotField::new(grid.clone(), values).unwrap();
            let path = FramePath::new(vec![0.0, 0.37], "poly");
            let cfg = ShiftConfig {
                order,
                ..ShiftConfig::default()
            };
            let out = apply(&f, &path, Direction::Forward, &cfg).unwrap();
            // Rows far enough from either boundary use full stencils.
            for i in order..(32 - order) {
                assert_relative_eq!(out.values[(i, 1)], poly(i as f64 - 0.37), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn bounded_edges_replicate_or_hold_constant() {
        let grid = GridSpec::bounded(4, 2, 1.0, 1.0).unwrap();
        let values = DMatrix::from_fn(4, 2, |i, _| i as f64 + 1.0);
        let f = SnapshotField::new(grid, values).unwrap();
        let path = FramePath::new(vec![0.0, 2.0], "out");

        let rep = apply(&f, &path, Direction::Forward, &ShiftConfig::exact()).unwrap();
        assert_eq!(rep.values[(0, 1)], 1.0);
        assert_eq!(rep.values[(1, 1)], 1.0);
        assert_eq!(rep.values[(3, 1)], 2.0);

        let cfg = ShiftConfig {
            mode: ShiftMode::Exact,
            edge: EdgePolicy::Constant(-7.0),
            ..ShiftConfig::default()
        };
        let con = apply(&f, &path, Direction::Forward, &cfg).unwrap();
        assert_eq!(con.values[(0, 1)], -7.0);
        assert_eq!(con.values[(1, 1)], -7.0);
        assert_eq!(con.values[(2, 1)], 1.0);
    }

    #[test]
    fn interpolated_integer_offsets_match_exact_mode() {
        let grid = GridSpec::periodic(12, 4, 0.25, 1.0).unwrap();
        let values = DMatrix::from_fn(12, 4, |i, j| (i as f64).sin() + j as f64);
        let f = SnapshotField::new(grid, values).unwrap();
        let path = FramePath::new(vec![0.0, 0.25, -0.5, 0.75], "cells");
        let exact = apply(&f, &path, Direction::Forward, &ShiftConfig::exact()).unwrap();
        let interp = apply(&f, &path, Direction::Forward, &ShiftConfig::default()).unwrap();
        assert_eq!(exact.values, interp.values);
    }

    #[test]
    fn rejects_odd_interpolation_order_and_bad_path_length() {
        let f = spike_field(8, 3, 1);
        let path = FramePath::new(vec![0.0, 1.0, 2.0], "ok");
        let cfg = ShiftConfig {
            order: 3,
            ..ShiftConfig::default()
        };
        assert!(matches!(
            apply(&f, &path, Direction::Forward, &cfg),
            Err(Error::InvalidConfig(_))
        ));
        let short = FramePath::new(vec![0.0], "short");
        assert!(matches!(
            apply(&f, &short, Direction::Forward, &ShiftConfig::default()),
            Err(Error::PathLength { got: 1, expected: 3 })
        ));
    }
}
