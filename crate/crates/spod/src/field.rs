use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Space-time grid carrying the snapshot layout.
///
/// `m` interior points with spacing `dx`, `n` snapshots with spacing `dt`.
/// Periodic grids identify `x = 0` with `x = L = m*dx`; bounded grids span
/// `L = (m-1)*dx` inclusive of both endpoints. A grid may carry an extension
/// of `ext_left`/`ext_right` cells appended outside the interior domain so
/// that transported frames stay representable; row indices always refer to
/// the extended layout and the interior occupies `omega_rows()`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub m: usize,
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
    pub periodic: bool,
    pub ext_left: usize,
    pub ext_right: usize,
}

impl GridSpec {
    pub fn periodic(m: usize, n: usize, dx: f64, dt: f64) -> Result<Self> {
        Self::validate_base(m, n, dx, dt)?;
        Ok(GridSpec {
            m,
            n,
            dx,
            dt,
            periodic: true,
            ext_left: 0,
            ext_right: 0,
        })
    }

    pub fn bounded(m: usize, n: usize, dx: f64, dt: f64) -> Result<Self> {
        Self::validate_base(m, n, dx, dt)?;
        Ok(GridSpec {
            m,
            n,
            dx,
            dt,
            periodic: false,
            ext_left: 0,
            ext_right: 0,
        })
    }

    fn validate_base(m: usize, n: usize, dx: f64, dt: f64) -> Result<()> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 spatial points, got {m}")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 snapshots, got {n}")));
        }
        if !(dx.is_finite() && dx > 0.0) {
            return Err(Error::InvalidGrid(format!("dx must be positive, got {dx}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        Ok(())
    }

    /// Spatial period (periodic) or domain span (bounded).
    pub fn length(&self) -> f64 {
        if self.periodic {
            self.m as f64 * self.dx
        } else {
            (self.m - 1) as f64 * self.dx
        }
    }

    pub fn time_span(&self) -> f64 {
        (self.n - 1) as f64 * self.dt
    }

    /// Total row count of the extended layout.
    pub fn rows(&self) -> usize {
        self.m + self.ext_left + self.ext_right
    }

    /// Row range of the interior domain within the extended layout.
    pub fn omega_rows(&self) -> std::ops::Range<usize> {
        self.ext_left..self.ext_left + self.m
    }

    pub fn is_extended(&self) -> bool {
        self.ext_left > 0 || self.ext_right > 0
    }

    /// Spatial coordinate of extended row `i`; interior starts at `x = 0`.
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.ext_left as f64) * self.dx
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    /// Same grid with `ext_left`/`ext_right` cells appended outside the
    /// interior. Periodic grids wrap instead of extending.
    pub fn with_extension(&self, ext_left: usize, ext_right: usize) -> Result<Self> {
        if self.periodic && (ext_left > 0 || ext_right > 0) {
            return Err(Error::InvalidGrid(
                "periodic grids wrap and take no extension".into(),
            ));
        }
        let mut g = self.clone();
        g.ext_left = ext_left;
        g.ext_right = ext_right;
        Ok(g)
    }
}

/// A snapshot matrix bound to its grid: rows are space, columns are time.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotField {
    pub grid: GridSpec,
    pub values: DMatrix<f64>,
}

impl SnapshotField {
    pub fn new(grid: GridSpec, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != grid.rows() || values.ncols() != grid.n {
            return Err(Error::ShapeMismatch {
                rows: values.nrows(),
                cols: values.ncols(),
                expected_rows: grid.rows(),
                expected_cols: grid.n,
            });
        }
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if !values[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(SnapshotField { grid, values })
    }

    /// Skips the shape/finiteness scan; for internally produced matrices.
    pub(crate) fn new_unchecked(grid: GridSpec, values: DMatrix<f64>) -> Self {
        debug_assert_eq!(values.nrows(), grid.rows());
        debug_assert_eq!(values.ncols(), grid.n);
        SnapshotField { grid, values }
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }

    /// Copy of the interior block.
    pub fn omega_block(&self) -> DMatrix<f64> {
        let r = self.grid.omega_rows();
        self.values.view((r.start, 0), (self.grid.m, self.grid.n)).into_owned()
    }
}

/// Per-snapshot spatial shifts of one co-moving frame, in physical units.
///
/// `shifts[j]` is how far the frame has travelled by snapshot `j`; the
/// laboratory view of a frame is the frame content displaced by that amount.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePath {
    pub shifts: Vec<f64>,
    pub label: String,
}

impl FramePath {
    pub fn new(shifts: Vec<f64>, label: impl Into<String>) -> Self {
        FramePath {
            shifts,
            label: label.into(),
        }
    }

    /// Path of a frame moving at constant velocity `c`: shift `c * t_j`.
    pub fn constant_velocity(c: f64, grid: &GridSpec) -> Self {
        let shifts = (0..grid.n).map(|j| c * grid.t(j)).collect();
        FramePath::new(shifts, format!("c={c}"))
    }

    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    /// Shifts in units of grid cells.
    pub fn cells(&self, dx: f64) -> impl Iterator<Item = f64> + '_ {
        self.shifts.iter().map(move |s| s / dx)
    }

    pub fn max_shift(&self) -> f64 {
        self.shifts.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_shift(&self) -> f64 {
        self.shifts.iter().cloned().fold(0.0, f64::min)
    }
}

/// Weights in `[0, 1]` on the extended layout selecting where reconstruction
/// is enforced. The default is the indicator of the interior domain.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMask {
    pub values: DMatrix<f64>,
}

impl WeightMask {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                let w = values[(i, j)];
                if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                    return Err(Error::InvalidConfig(format!(
                        "weight at ({i}, {j}) is {w}, outside [0, 1]"
                    )));
                }
            }
        }
        Ok(WeightMask { values })
    }

    /// Indicator of the interior domain: 1 on interior rows, 0 on extension.
    pub fn interior(grid: &GridSpec) -> Self {
        let mut values = DMatrix::zeros(grid.rows(), grid.n);
        for j in 0..grid.n {
            for i in grid.omega_rows() {
                values[(i, j)] = 1.0;
            }
        }
        WeightMask { values }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.values.nrows(), self.values.ncols())
    }

    /// Componentwise product `w .* a`.
    pub fn apply(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.values.component_mul(a)
    }

    pub fn apply_mut(&self, a: &mut DMatrix<f64>) {
        a.component_mul_assign(&self.values);
    }

    /// True when every weight is exactly 1: masking is then a no-op.
    pub fn is_all_ones(&self) -> bool {
        self.values.iter().all(|&w| w == 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_length_counts_the_wrap_cell() {
        let g = GridSpec::periodic(100, 50, 0.1, 0.1).unwrap();
        assert_eq!(g.length(), 10.0);
        let b = GridSpec::bounded(100, 50, 0.1, 0.1).unwrap();
        assert!((b.length() - 9.9).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::periodic(1, 50, 0.1, 0.1).is_err());
        assert!(GridSpec::periodic(100, 1, 0.1, 0.1).is_err());
        assert!(GridSpec::periodic(100, 50, 0.0, 0.1).is_err());
        assert!(GridSpec::periodic(100, 50, 0.1, -1.0).is_err());
        assert!(GridSpec::bounded(100, 50, f64::NAN, 0.1).is_err());
    }

    #[test]
    fn extension_offsets_coordinates() {
        let g = GridSpec::bounded(10, 5, 0.5, 1.0)
            .unwrap()
            .with_extension(3, 2)
            .unwrap();
        assert_eq!(g.rows(), 15);
        assert_eq!(g.omega_rows(), 3..13);
        assert!((g.x(3) - 0.0).abs() < 1e-15);
        assert!((g.x(0) + 1.5).abs() < 1e-15);
        assert!((g.x(14) - 5.5).abs() < 1e-15);
    }

    #[test]
    fn periodic_grids_take_no_extension() {
        let g = GridSpec::periodic(10, 5, 0.5, 1.0).unwrap();
        assert!(g.with_extension(1, 0).is_err());
        assert!(g.with_extension(0, 0).is_ok());
    }

    #[test]
    fn field_validates_shape_and_finiteness() {
        let g = GridSpec::bounded(4, 3, 1.0, 1.0).unwrap();
        assert!(SnapshotField::new(g.clone(), DMatrix::zeros(4, 3)).is_ok());
        assert!(matches!(
            SnapshotField::new(g.clone(), DMatrix::zeros(5, 3)),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut bad = DMatrix::zeros(4, 3);
        bad[(2, 1)] = f64::INFINITY;
        assert!(matches!(
            SnapshotField::new(g, bad),
            Err(Error::NonFinite { row: 2, col: 1 })
        ));
    }

    #[test]
    fn omega_block_strips_the_extension() {
        let g = GridSpec::bounded(3, 2, 1.0, 1.0)
            .unwrap()
            .with_extension(1, 1)
            .unwrap();
        let values = DMatrix::from_fn(5, 2, |i, j| (10 * i + j) as f64);
        let f = SnapshotField::new(g, values).unwrap();
        let omega = f.omega_block();
        assert_eq!(omega.nrows(), 3);
        assert_eq!(omega[(0, 0)], 10.0);
        assert_eq!(omega[(2, 1)], 31.0);
    }

    #[test]
    fn constant_velocity_path_scales_with_dt() {
        let g = GridSpec::periodic(10, 4, 1.0, 0.5).unwrap();
        let p = FramePath::constant_velocity(2.0, &g);
        assert_eq!(p.shifts, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(p.max_shift(), 3.0);
        assert_eq!(p.min_shift(), 0.0);
    }

    #[test]
    fn interior_mask_is_an_indicator() {
        let g = GridSpec::bounded(3, 2, 1.0, 1.0)
            .unwrap()
            .with_extension(2, 1)
            .unwrap();
        let w = WeightMask::interior(&g);
        assert_eq!(w.shape(), (6, 2));
        let col: Vec<f64> = (0..6).map(|i| w.values[(i, 0)]).collect();
        assert_eq!(col, vec![0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        assert!(!w.is_all_ones());
        let full = WeightMask::interior(&GridSpec::periodic(4, 2, 1.0, 1.0).unwrap());
        assert!(full.is_all_ones());
    }

    #[test]
    fn mask_rejects_out_of_range_weights() {
        assert!(WeightMask::new(DMatrix::from_element(2, 2, 1.5)).is_err());
        assert!(WeightMask::new(DMatrix::from_element(2, 2, -0.1)).is_err());
        assert!(WeightMask::new(DMatrix::from_element(2, 2, 0.5)).is_ok());
    }
}
