//! Analytic snapshot generators with known co-moving structure.
//!
//! Every generator returns the field together with the exact frame paths,
//! the rank each aligned frame attains, and the lab-frame contribution of
//! each frame. The contributions sum to the emitted field by construction,
//! so tests can check reconstruction and rank claims against closed-form
//! ground truth instead of optimizer output.
//!
//! All travelling cases place one grid cell per time step (`dt` equals the
//! cell size over the unit speed), so integer-cell transport applies and the
//! aligned frames are exactly low-rank, not merely up to interpolation error.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::field::{FramePath, GridSpec, SnapshotField};

/// Spatial period used by the wave generators.
pub const DOMAIN_LENGTH: f64 = std::f64::consts::TAU;

/// Pulse width as a fraction of the domain length.
pub const WIDTH_FRACTION: f64 = 0.06;

/// Default diffusion constant for [`two_diffusing_pulses`].
///
/// Chosen so the diffusive correction grows to roughly 30% of the pulse
/// amplitude by the final snapshot on the default 100x50 grid.
pub const DIFFUSION_DEFAULT: f64 = 0.007;

/// A generated dataset together with its exact co-moving structure.
#[derive(Debug, Clone)]
pub struct GeneratedCase {
    pub data: SnapshotField,
    pub paths: Vec<FramePath>,
    /// Rank of each frame after exact alignment.
    pub ranks: Vec<usize>,
    /// Lab-frame contribution of each frame; the contributions sum to `data`.
    pub components: Vec<DMatrix<f64>>,
}

impl GeneratedCase {
    fn assemble(
        grid: GridSpec,
        paths: Vec<FramePath>,
        ranks: Vec<usize>,
        components: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let mut values = DMatrix::zeros(grid.m, grid.n);
        for c in &components {
            values += c;
        }
        Ok(GeneratedCase {
            data: SnapshotField::new(grid, values)?,
            paths,
            ranks,
            components,
        })
    }
}

/// Signed distance from `z` to the nearest periodic image of zero.
fn wrapped(z: f64, period: f64) -> f64 {
    let mut d = z % period;
    if d > period / 2.0 {
        d -= period;
    }
    if d < -period / 2.0 {
        d += period;
    }
    d
}

/// Two unit-amplitude Gaussian pulses crossing on a periodic domain.
///
/// The pulses start at `L/4` and `3L/4` and travel with speeds `+1` and `-1`,
/// so each aligned frame is a constant spatial profile: rank one with a
/// constant time amplitude.
pub fn two_crossing_waves(m: usize, n: usize) -> Result<GeneratedCase> {
    let l = DOMAIN_LENGTH;
    let dx = l / m as f64;
    let grid = GridSpec::periodic(m, n, dx, dx)?;
    let sigma = WIDTH_FRACTION * l;
    let gauss = |z: f64| (-z * z / (sigma * sigma)).exp();

    let right = DMatrix::from_fn(m, n, |i, j| {
        gauss(wrapped(grid.x(i) - grid.t(j) - l / 4.0, l))
    });
    let left = DMatrix::from_fn(m, n, |i, j| {
        gauss(wrapped(grid.x(i) + grid.t(j) - 3.0 * l / 4.0, l))
    });
    let paths = vec![
        FramePath::constant_velocity(1.0, &grid),
        FramePath::constant_velocity(-1.0, &grid),
    ];
    GeneratedCase::assemble(grid, paths, vec![1, 1], vec![right, left])
}

/// Two crossing pulses whose shapes flatten linearly in time, mimicking
/// diffusion with constant `mu`.
///
/// Each contribution is `p(z) + mu*t*p''(z)` in its own co-moving coordinate
/// `z`, which is the first-order Taylor expansion of a diffusing profile.
/// The aligned frames are therefore exactly rank two: one constant mode and
/// one mode growing linearly in time.
pub fn two_diffusing_pulses(m: usize, n: usize, mu: f64) -> Result<GeneratedCase> {
    let l = DOMAIN_LENGTH;
    let dx = l / m as f64;
    let grid = GridSpec::periodic(m, n, dx, dx)?;
    let sigma = WIDTH_FRACTION * l;
    let s2 = sigma * sigma;
    let pulse = |z: f64| 0.5 * (-z * z / s2).exp();
    // Second spatial derivative of `pulse`: negative core, positive lobes.
    let curvature = |z: f64| 0.5 * (-z * z / s2).exp() * (4.0 * z * z / (s2 * s2) - 2.0 / s2);

    let component = |center: f64, speed: f64| {
        DMatrix::from_fn(m, n, |i, j| {
            let t = grid.t(j);
            let z = wrapped(grid.x(i) - speed * t - center, l);
            pulse(z) + mu * t * curvature(z)
        })
    };
    let right = component(l / 4.0, 1.0);
    let left = component(3.0 * l / 4.0, -1.0);
    let paths = vec![
        FramePath::constant_velocity(1.0, &grid),
        FramePath::constant_velocity(-1.0, &grid),
    ];
    GeneratedCase::assemble(grid, paths, vec![2, 2], vec![right, left])
}

/// Boundary scenarios on a bounded (non-periodic) domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// A single pulse travels to the right and exits through the boundary.
    Leaving,
    /// The leaving pulse plus its mirror image about the right boundary,
    /// together modelling a reflection: the incoming pulse crosses its
    /// returning twin exactly at the wall.
    Reflected,
}

/// A Gaussian pulse interacting with the right domain boundary.
///
/// The incoming pulse starts at `L/2` with speed `+1`; the reflected variant
/// adds the mirror pulse about `x = L`, which travels with speed `-1` and
/// re-enters the domain as the incoming pulse leaves. Bounded grids truncate
/// whatever lies outside, which is precisely the situation the weighting
/// and domain-extension machinery exists for.
pub fn boundary_case(kind: BoundaryKind, m: usize, n: usize) -> Result<GeneratedCase> {
    let l = DOMAIN_LENGTH;
    let dx = l / (m - 1).max(1) as f64;
    let grid = GridSpec::bounded(m, n, dx, dx)?;
    let sigma = WIDTH_FRACTION * l;
    let gauss = |z: f64| (-z * z / (sigma * sigma)).exp();
    let start = l / 2.0;

    let incoming = DMatrix::from_fn(m, n, |i, j| gauss(grid.x(i) - grid.t(j) - start));
    match kind {
        BoundaryKind::Leaving => {
            let paths = vec![FramePath::constant_velocity(1.0, &grid)];
            GeneratedCase::assemble(grid, paths, vec![1], vec![incoming])
        }
        BoundaryKind::Reflected => {
            let mirror = DMatrix::from_fn(m, n, |i, j| {
                gauss((2.0 * l - grid.x(i)) - grid.t(j) - start)
            });
            let paths = vec![
                FramePath::constant_velocity(1.0, &grid),
                FramePath::constant_velocity(-1.0, &grid),
            ];
            GeneratedCase::assemble(grid, paths, vec![1, 1], vec![incoming, mirror])
        }
    }
}

/// The identity matrix read as a snapshot field on a periodic unit grid.
///
/// All singular values equal one, so plain truncation captures nothing
/// preferentially, yet the moving diagonal is a unit-speed frame of rank one.
pub fn identity_case(d: usize) -> Result<GeneratedCase> {
    let grid = GridSpec::periodic(d, d, 1.0, 1.0)?;
    let eye = DMatrix::<f64>::identity(d, d);
    let paths = vec![FramePath::constant_velocity(1.0, &grid)];
    GeneratedCase::assemble(grid, paths, vec![1], vec![eye])
}

/// Hyperbolic-tangent plateau with sharp edges at `a` and `b` (in cells).
fn plateau(xi: f64, a: f64, b: f64, w: f64) -> f64 {
    0.5 * (((xi - a) / w).tanh() - ((xi - b) / w).tanh())
}

/// Multi-front surrogate: one rank-four frame and three rank-one frames at
/// distinct speeds, all with sharp tanh edges, on a periodic unit grid.
///
/// The dominant frame carries a travelling plateau plus three oscillating
/// secondary modes, giving it rank four after alignment; the remaining
/// frames are single plateaus with time-varying amplitudes. Defaults of
/// `m = 1024`, `n = 500` give a field whose sharp moving fronts defeat plain
/// low-rank truncation while each frame stays exactly low-rank when aligned.
pub fn front_surrogate(m: usize, n: usize) -> Result<GeneratedCase> {
    let grid = GridSpec::periodic(m, n, 1.0, 1.0)?;
    let ml = m as f64;
    let w = 3.0;
    let tau = std::f64::consts::TAU;

    // Aligned content of the dominant frame: a plateau and three modulated
    // bumps, so the frame spans exactly four independent spatial profiles.
    let front = |xi: f64| plateau(xi, 0.20 * ml, 0.38 * ml, w);
    let bump = |xi: f64, c: f64, s: f64| (-(xi - c * ml) * (xi - c * ml) / (s * ml * s * ml)).exp();
    let secondary: [Box<dyn Fn(f64) -> f64>; 3] = [
        Box::new(move |xi| bump(xi, 0.23, 0.015)),
        Box::new(move |xi| bump(xi, 0.29, 0.020)),
        Box::new(move |xi| bump(xi, 0.35, 0.015)),
    ];
    let amps = [0.25, 0.20, 0.15];
    let freqs = [1.0, 2.0, 3.0];

    let nl = n as f64;
    let speeds = [1.0, 2.0, -1.0, 3.0];
    let mut components = Vec::with_capacity(4);

    components.push(DMatrix::from_fn(m, n, |i, j| {
        let xi = (i as f64 - speeds[0] * j as f64).rem_euclid(ml);
        let mut v = front(xi);
        for k in 0..3 {
            v += amps[k] * (tau * freqs[k] * j as f64 / nl).cos() * secondary[k](xi);
        }
        v
    }));
    // Three simple fronts at their own speeds, each a single plateau whose
    // amplitude breathes in time: rank one after alignment.
    let singles = [(0.55, 0.63, 0.5, 2.0), (0.70, 0.76, 0.4, 3.0), (0.84, 0.92, 0.35, 5.0)];
    for (k, (a, b, scale, freq)) in singles.iter().enumerate() {
        let speed = speeds[k + 1];
        components.push(DMatrix::from_fn(m, n, |i, j| {
            let xi = (i as f64 - speed * j as f64).rem_euclid(ml);
            let amp = scale * (1.0 + 0.3 * (tau * freq * j as f64 / nl).sin());
            amp * plateau(xi, a * ml, b * ml, w)
        }));
    }

    let paths = speeds
        .iter()
        .map(|&c| FramePath::constant_velocity(c, &grid))
        .collect();
    GeneratedCase::assemble(grid, paths, vec![4, 1, 1, 1], components)
}
