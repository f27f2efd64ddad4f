//! Multi-frame decompositions of a snapshot matrix and the operations that
//! tie them to the data: domain extension, initial splitting, reconstruction,
//! and projection onto the reconstruction constraint.
//!
//! A decomposition holds one co-moving frame per transport path plus the
//! target rank of each frame. The frames live on a shared (possibly
//! extended) grid; summing their forward-shifted views reproduces the data
//! wherever the weight mask is active.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::field::{FramePath, GridSpec, SnapshotField, WeightMask};
use crate::par;
use crate::shift::{self, Direction, EdgePolicy, ShiftConfig, ShiftMode};

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub frames: Vec<SnapshotField>,
    pub paths: Vec<FramePath>,
    pub ranks: Vec<usize>,
}

impl Decomposition {
    pub fn new(frames: Vec<SnapshotField>, paths: Vec<FramePath>, ranks: Vec<usize>) -> Result<Self> {
        let d = Decomposition { frames, paths, ranks };
        d.validate()?;
        Ok(d)
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.frames[0].grid
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::EmptyDecomposition);
        }
        if self.paths.len() != self.frames.len() {
            return Err(Error::FrameCountMismatch {
                frames: self.frames.len(),
                expected: self.paths.len(),
                what: "paths",
            });
        }
        if self.ranks.len() != self.frames.len() {
            return Err(Error::FrameCountMismatch {
                frames: self.frames.len(),
                expected: self.ranks.len(),
                what: "ranks",
            });
        }
        let grid = &self.frames[0].grid;
        for f in &self.frames[1..] {
            if f.grid != *grid {
                return Err(Error::InvalidGrid("frames disagree on their grid".into()));
            }
        }
        for p in &self.paths {
            if p.len() != grid.n {
                return Err(Error::PathLength {
                    got: p.len(),
                    expected: grid.n,
                });
            }
        }
        let max_rank = grid.rows().min(grid.n);
        for &r in &self.ranks {
            if r == 0 || r > max_rank {
                return Err(Error::RankOutOfRange {
                    rank: r,
                    rows: grid.rows(),
                    cols: grid.n,
                });
            }
        }
        Ok(())
    }
}

/// How many cells the grid must grow on each side so that every path's
/// content stays representable: positive shifts pull frame content in from
/// the left, negative ones from the right. Interpolation stencils wider than
/// linear get half a stencil of slack on top.
pub fn extension_cells(paths: &[FramePath], dx: f64, cfg: &ShiftConfig) -> (usize, usize) {
    let mut max_pos = 0.0f64;
    let mut max_neg = 0.0f64;
    for p in paths {
        max_pos = max_pos.max(p.max_shift());
        max_neg = max_neg.max(-p.min_shift());
    }
    let pad = match cfg.mode {
        ShiftMode::Exact => 0,
        ShiftMode::Interpolated => cfg.order / 2 - 1,
    };
    (ceil_cells(max_pos / dx) + pad, ceil_cells(max_neg / dx) + pad)
}

fn ceil_cells(v: f64) -> usize {
    ((v - 1e-9).ceil().max(0.0)) as usize
}

/// Embeds the data in a grid wide enough for all paths and returns it with
/// the interior-indicator mask. Periodic grids wrap, so they come back
/// unchanged under an all-ones mask. Extension rows are filled according to
/// the edge policy, but the mask keeps them out of every error measure.
pub fn extend_domain(
    q: &SnapshotField,
    paths: &[FramePath],
    cfg: &ShiftConfig,
) -> Result<(SnapshotField, WeightMask)> {
    if q.grid.is_extended() {
        return Err(Error::InvalidGrid("data is already on an extended grid".into()));
    }
    for p in paths {
        if p.len() != q.grid.n {
            return Err(Error::PathLength {
                got: p.len(),
                expected: q.grid.n,
            });
        }
    }
    if q.grid.periodic {
        let mask = WeightMask::interior(&q.grid);
        return Ok((q.clone(), mask));
    }

    let (ext_left, ext_right) = extension_cells(paths, q.grid.dx, cfg);
    let grid = q.grid.with_extension(ext_left, ext_right)?;
    let mut values = DMatrix::zeros(grid.rows(), grid.n);
    for j in 0..grid.n {
        let (lo, hi) = match cfg.edge {
            EdgePolicy::Replicate => (q.values[(0, j)], q.values[(q.grid.m - 1, j)]),
            EdgePolicy::Constant(c) => (c, c),
        };
        for i in 0..ext_left {
            values[(i, j)] = lo;
        }
        for i in 0..q.grid.m {
            values[(ext_left + i, j)] = q.values[(i, j)];
        }
        for i in ext_left + q.grid.m..grid.rows() {
            values[(i, j)] = hi;
        }
    }
    let mask = WeightMask::interior(&grid);
    Ok((SnapshotField::new_unchecked(grid, values), mask))
}

/// Splits the data evenly: frame `k` is the inverse-shifted data divided by
/// the frame count. Satisfies the reconstruction constraint exactly in
/// exact-shift mode and up to interpolation error otherwise.
pub fn initial_guess(
    q: &SnapshotField,
    paths: &[FramePath],
    ranks: &[usize],
    cfg: &ShiftConfig,
) -> Result<Decomposition> {
    if paths.is_empty() {
        return Err(Error::EmptyDecomposition);
    }
    let k = paths.len() as f64;
    let frames = try_map_frames(paths.len(), |i| {
        let mut f = shift::apply(q, &paths[i], Direction::Inverse, cfg)?;
        f.values /= k;
        Ok(f)
    })?;
    Decomposition::new(frames, paths.to_vec(), ranks.to_vec())
}

/// Sum of the forward-shifted frames: the decomposition seen from the
/// laboratory.
pub fn reconstruct(d: &Decomposition, cfg: &ShiftConfig) -> Result<SnapshotField> {
    d.validate()?;
    let shifted = try_map_frames(d.num_frames(), |k| {
        shift::apply_matrix(&d.frames[k].values, d.grid(), &d.paths[k], Direction::Forward, cfg)
    })?;
    let mut total = DMatrix::zeros(d.grid().rows(), d.grid().n);
    for s in &shifted {
        total += s;
    }
    Ok(SnapshotField::new_unchecked(d.grid().clone(), total))
}

/// Weighted reconstruction misfit `w .* (q - reconstruct(d))`.
pub fn residual(
    d: &Decomposition,
    q: &SnapshotField,
    weights: &WeightMask,
    cfg: &ShiftConfig,
) -> Result<DMatrix<f64>> {
    check_against_data(d, q, weights)?;
    let rec = reconstruct(d, cfg)?;
    let mut r = &q.values - rec.values;
    weights.apply_mut(&mut r);
    Ok(r)
}

/// `||w .* (q - reconstruct)|| / ||w .* q||`.
pub fn rel_error(
    d: &Decomposition,
    q: &SnapshotField,
    weights: &WeightMask,
    cfg: &ShiftConfig,
) -> Result<f64> {
    let denom = weights.apply(&q.values).norm();
    if denom == 0.0 {
        return Err(Error::InvalidConfig("data has zero norm under the weights".into()));
    }
    Ok(residual(d, q, weights, cfg)?.norm() / denom)
}

/// Restores the reconstruction constraint by spreading the weighted misfit
/// evenly over the frames, each receiving its share pulled back along its
/// own path. Exact in exact-shift mode; with interpolation one application
/// shrinks the violation by roughly the interpolation error, so callers
/// iterate when they need more.
pub fn project_constraint(
    d: &Decomposition,
    q: &SnapshotField,
    weights: &WeightMask,
    cfg: &ShiftConfig,
) -> Result<Decomposition> {
    let r = residual(d, q, weights, cfg)?;
    let share = 1.0 / d.num_frames() as f64;
    let frames = try_map_frames(d.num_frames(), |k| {
        let pulled = shift::apply_matrix(&r, d.grid(), &d.paths[k], Direction::Inverse, cfg)?;
        let values = &d.frames[k].values + share * pulled;
        Ok(SnapshotField::new_unchecked(d.frames[k].grid.clone(), values))
    })?;
    Ok(Decomposition {
        frames,
        paths: d.paths.clone(),
        ranks: d.ranks.clone(),
    })
}

fn check_against_data(d: &Decomposition, q: &SnapshotField, weights: &WeightMask) -> Result<()> {
    d.validate()?;
    let grid = d.grid();
    if q.values.shape() != (grid.rows(), grid.n) {
        return Err(Error::ShapeMismatch {
            rows: q.values.nrows(),
            cols: q.values.ncols(),
            expected_rows: grid.rows(),
            expected_cols: grid.n,
        });
    }
    if weights.shape() != (grid.rows(), grid.n) {
        return Err(Error::ShapeMismatch {
            rows: weights.shape().0,
            cols: weights.shape().1,
            expected_rows: grid.rows(),
            expected_cols: grid.n,
        });
    }
    Ok(())
}

pub(crate) fn try_map_frames<T, F>(len: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    par::map_indexed(len, f).into_iter().collect()
}
