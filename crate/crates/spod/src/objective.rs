//! Singular-value objectives over multi-frame decompositions and their
//! gradients.
//!
//! Every objective scores how far each frame is from being rank `r_k`, using
//! only that frame's leading singular triples (or its full spectrum for the
//! nuclear norm). Gradients come out in two stages: a raw per-frame gradient
//! of the separable objective, then a redistribution step that projects the
//! collection onto directions preserving the weighted reconstruction
//! constraint, so that descent never has to leave the constraint manifold.

use nalgebra::DMatrix;

use crate::decomp::{self, Decomposition};
use crate::error::{Error, Result};
use crate::field::{FramePath, GridSpec, SnapshotField, WeightMask};
use crate::lowrank::{self, SvdTriple};
use crate::shift::{self, Direction, ShiftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// Sum over frames of the energy fraction missed by the truncation:
    /// `1 - sum_{l<=r} s_l^2 / ||q_k||^2`. Scale-invariant per frame.
    ResidualFraction,
    /// Unnormalized variant: `||q_k||^2 - sum_{l<=r} s_l^2`, the squared
    /// truncation error itself.
    ResidualEnergy,
    /// Nuclear norm `sum_l s_l` over the whole spectrum; rank-sparsifying
    /// but blind to the rank targets.
    Nuclear,
    /// Upper bound on the nuclear norm from the leading `r` values plus a
    /// Cauchy-Schwarz bound on the tail:
    /// `sum_{l<=r} s_l + sqrt(d - r) * sqrt(residual energy)`.
    NuclearBound,
}

/// Functional form of the optional frame-norm penalty.
///
/// The squared form is smooth everywhere, but because its gradient `2eps q`
/// fades with the frame, the trade-off against the other objective terms
/// settles at a nonzero equilibrium: a redundant frame keeps a constant
/// fraction of the norm no matter how long one optimizes. The plain form
/// keeps a unit-magnitude pull `eps q/||q||` all the way down and drives
/// unneeded frames to zero in finitely many steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyForm {
    /// `penalty * sum_k ||q_k||^2`.
    #[default]
    Squared,
    /// `penalty * sum_k ||q_k||`.
    Plain,
}

#[derive(Debug, Clone)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    /// Coefficient of an optional frame-norm penalty term that drains frames
    /// the reconstruction does not need. Zero disables it.
    pub penalty: f64,
    /// Which norm the penalty applies; see [`PenaltyForm`].
    pub penalty_form: PenaltyForm,
    /// Relative cutoff under which a singular value is treated as zero in
    /// the nuclear sub-gradient and in the tail guard of the bound variant.
    pub singular_cutoff: f64,
    /// Largest matrix dimension for which a full spectrum may be computed.
    pub spectrum_cap: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            kind: ObjectiveKind::ResidualFraction,
            penalty: 0.0,
            penalty_form: PenaltyForm::Squared,
            singular_cutoff: 1e-10,
            spectrum_cap: 2048,
        }
    }
}

impl ObjectiveConfig {
    pub fn of_kind(kind: ObjectiveKind) -> Self {
        ObjectiveConfig {
            kind,
            ..ObjectiveConfig::default()
        }
    }
}

/// Spectral data of one frame, sufficient to evaluate any objective and its
/// gradient without touching the frame matrix again.
#[derive(Debug, Clone)]
pub struct FrameSpectrum {
    /// Leading `rank` triples, or the full spectrum for [`ObjectiveKind::Nuclear`].
    pub triple: SvdTriple,
    /// Frobenius norm of the frame.
    pub frob: f64,
    /// Squared Frobenius norm of the truncation residual, measured on the
    /// residual matrix itself. The algebraic shortcut `frob² − Σ_{l≤r} s_l²`
    /// loses all significant digits once the tail sits many orders below the
    /// norm, and the line search then stalls on evaluation noise; the
    /// entrywise residual keeps full relative precision there.
    pub tail_sq: f64,
    /// First singular value past the truncation, when one exists.
    pub next_singular: Option<f64>,
    /// The frame's target rank.
    pub rank: usize,
    /// `min(rows, cols)` of the frame matrix.
    pub min_dim: usize,
}

/// The data a decomposition is measured against.
#[derive(Debug, Clone, Copy)]
pub struct ProblemContext<'a> {
    pub data: &'a SnapshotField,
    pub weights: &'a WeightMask,
    pub shift: &'a ShiftConfig,
}

/// Everything `evaluate` knows about a decomposition's quality.
#[derive(Debug, Clone)]
pub struct ObjectiveReport {
    /// Objective value including the penalty term.
    pub total: f64,
    /// Per-frame objective terms, penalty excluded.
    pub per_frame: Vec<f64>,
    /// `||w .* (q - reconstruct)||`.
    pub constraint_violation: f64,
    /// `||w .* (q - reconstruct)|| / ||w .* q||`.
    pub rel_error: f64,
}

/// Factors every frame as its objective requires: leading `r_k` triples for
/// the truncated kinds, the full spectrum for the nuclear norm. Warns when
/// singular values are clustered at a truncation edge, where gradients of
/// the truncated objectives turn unreliable.
pub fn decompose_frames(d: &Decomposition, cfg: &ObjectiveConfig) -> Result<Vec<FrameSpectrum>> {
    d.validate()?;
    let spectra = decomp::try_map_frames(d.num_frames(), |k| {
        let values = &d.frames[k].values;
        let min_dim = values.nrows().min(values.ncols());
        let rank = d.ranks[k];
        if cfg.kind == ObjectiveKind::Nuclear {
            let triple = lowrank::svd_full(values, cfg.spectrum_cap)?;
            let tail_sq = triple.s.iter().skip(rank).map(|x| x * x).sum();
            Ok(FrameSpectrum {
                frob: values.norm(),
                next_singular: None,
                triple,
                tail_sq,
                rank,
                min_dim,
            })
        } else {
            let t = lowrank::svd_truncated(values, rank)?;
            let tail_sq = residual_tail_sq(values, &t.triple, rank);
            Ok(FrameSpectrum {
                triple: t.triple,
                frob: t.frobenius_norm,
                tail_sq,
                next_singular: t.next_singular,
                rank,
                min_dim,
            })
        }
    })?;
    for (k, spec) in spectra.iter().enumerate() {
        if let Some(next) = spec.next_singular {
            let s1 = spec.triple.s[0];
            if s1 > 0.0 && (spec.triple.s[spec.rank - 1] - next).abs() < 1e-8 * s1 {
                log::warn!(
                    "frame {k}: singular values {} and {} are clustered at the truncation edge; \
                     gradients may be erratic there",
                    spec.rank - 1,
                    spec.rank
                );
            }
        }
    }
    Ok(spectra)
}

/// `‖a − Σ_{l≤rank} s_l u_l v_lᵀ‖²` evaluated entrywise. See
/// [`FrameSpectrum::tail_sq`] for why the subtraction must happen in matrix
/// space rather than between squared norms.
fn residual_tail_sq(values: &DMatrix<f64>, triple: &SvdTriple, rank: usize) -> f64 {
    if rank >= triple.s.len() && triple.s.len() == values.nrows().min(values.ncols()) {
        return 0.0;
    }
    (values - triple.reconstruct_leading(rank)).norm_squared()
}

/// Objective term of one frame given retained singular values `s`, the frame
/// norm, the squared truncation-residual norm, and its shape. `s` holds the
/// full spectrum for the nuclear norm and exactly `rank` values otherwise.
pub(crate) fn value_from_parts(
    s: &[f64],
    frob: f64,
    tail_sq: f64,
    rank: usize,
    min_dim: usize,
    kind: ObjectiveKind,
) -> f64 {
    match kind {
        ObjectiveKind::ResidualFraction => tail_sq / (frob * frob),
        ObjectiveKind::ResidualEnergy => tail_sq,
        ObjectiveKind::Nuclear => s.iter().sum(),
        ObjectiveKind::NuclearBound => {
            let leading: f64 = s.iter().take(rank).sum();
            leading + ((min_dim - rank) as f64).sqrt() * tail_sq.sqrt()
        }
    }
}

fn frame_value(spec: &FrameSpectrum, frame: usize, kind: ObjectiveKind) -> Result<f64> {
    if kind == ObjectiveKind::ResidualFraction && spec.frob == 0.0 {
        return Err(Error::ZeroNormFrame { frame });
    }
    Ok(value_from_parts(
        spec.triple.s.as_slice(),
        spec.frob,
        spec.tail_sq,
        spec.rank,
        spec.min_dim,
        kind,
    ))
}

/// Total objective (with penalty) and the per-frame terms (without it).
pub(crate) fn value_of_spectra(
    spectra: &[FrameSpectrum],
    cfg: &ObjectiveConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut per_frame = Vec::with_capacity(spectra.len());
    for (k, spec) in spectra.iter().enumerate() {
        per_frame.push(frame_value(spec, k, cfg.kind)?);
    }
    let mut total: f64 = per_frame.iter().sum();
    if cfg.penalty != 0.0 {
        total += spectra.iter().map(|s| penalty_value(s.frob, cfg)).sum::<f64>();
    }
    Ok((total, per_frame))
}

pub(crate) fn penalty_value(frob: f64, cfg: &ObjectiveConfig) -> f64 {
    match cfg.penalty_form {
        PenaltyForm::Squared => cfg.penalty * frob * frob,
        PenaltyForm::Plain => cfg.penalty * frob,
    }
}

/// Objective of a single frame matrix at a given target rank, penalty term
/// included. Stand-alone entry point for derivative checks.
pub fn frame_objective(values: &DMatrix<f64>, rank: usize, cfg: &ObjectiveConfig) -> Result<f64> {
    let min_dim = values.nrows().min(values.ncols());
    let (s, frob, tail_sq): (Vec<f64>, f64, f64) = if cfg.kind == ObjectiveKind::Nuclear {
        let t = lowrank::svd_full(values, cfg.spectrum_cap)?;
        let tail = t.s.iter().skip(rank).map(|x| x * x).sum();
        (t.s.iter().cloned().collect(), values.norm(), tail)
    } else {
        let t = lowrank::svd_truncated(values, rank)?;
        let tail = residual_tail_sq(values, &t.triple, rank);
        (t.triple.s.iter().cloned().collect(), t.frobenius_norm, tail)
    };
    if cfg.kind == ObjectiveKind::ResidualFraction && frob == 0.0 {
        return Err(Error::ZeroNormFrame { frame: 0 });
    }
    let mut v = value_from_parts(&s, frob, tail_sq, rank, min_dim, cfg.kind);
    if cfg.penalty != 0.0 {
        v += penalty_value(frob, cfg);
    }
    Ok(v)
}

/// Full evaluation of a decomposition against its data.
pub fn evaluate(
    d: &Decomposition,
    ctx: &ProblemContext,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveReport> {
    let spectra = decompose_frames(d, cfg)?;
    let (total, per_frame) = value_of_spectra(&spectra, cfg)?;
    let violation = decomp::residual(d, ctx.data, ctx.weights, ctx.shift)?.norm();
    let denom = ctx.weights.apply(&ctx.data.values).norm();
    if denom == 0.0 {
        return Err(Error::InvalidConfig("data has zero norm under the weights".into()));
    }
    Ok(ObjectiveReport {
        total,
        per_frame,
        constraint_violation: violation,
        rel_error: violation / denom,
    })
}

/// Gradient of one frame's objective term (penalty included) with respect to
/// the frame entries.
pub fn grad_frame(values: &DMatrix<f64>, spec: &FrameSpectrum, cfg: &ObjectiveConfig) -> DMatrix<f64> {
    let t = &spec.triple;
    let r = spec.rank;
    let mut g = match cfg.kind {
        ObjectiveKind::ResidualFraction => {
            // d/dq [1 - captured / n^2]
            //   = -2 sum_l s_l u_l v_l^T / n^2 + 2 captured q / n^4.
            let n2 = spec.frob * spec.frob;
            let captured: f64 = t.s.iter().take(r).map(|x| x * x).sum();
            let mut g = scaled_outer_sum(t, 0..r, |s| -2.0 * s / n2);
            g += (2.0 * captured / (n2 * n2)) * values;
            g
        }
        ObjectiveKind::ResidualEnergy => {
            // 2 (q - truncation): twice the truncation residual.
            let mut g = scaled_outer_sum(t, 0..r, |s| -2.0 * s);
            g += 2.0 * values;
            g
        }
        ObjectiveKind::Nuclear => {
            // Sub-gradient sum_l u_l v_l^T over values above the cutoff.
            let s1 = t.s[0];
            let cut = cfg.singular_cutoff * s1;
            let keep = t.s.iter().take_while(|&&s| s > cut).count();
            scaled_outer_sum(t, 0..keep, |_| 1.0)
        }
        ObjectiveKind::NuclearBound => {
            // sum_{l<=r} u_l v_l^T  +  sqrt(d-r) * R / sqrt(tail), with
            // R = q - truncation and tail = ||R||^2. The second term is
            // dropped once the tail is negligible against s_1, where the
            // square root kinks.
            let mut g = scaled_outer_sum(t, 0..r, |_| 1.0);
            let tail = spec.tail_sq;
            let guard = cfg.singular_cutoff * t.s[0];
            if tail.sqrt() > guard {
                let coeff = ((spec.min_dim - r) as f64).sqrt() / tail.sqrt();
                let mut resid = values.clone();
                resid += scaled_outer_sum(t, 0..r, |s| -s);
                g += coeff * resid;
            }
            g
        }
    };
    if cfg.penalty != 0.0 {
        match cfg.penalty_form {
            PenaltyForm::Squared => g += (2.0 * cfg.penalty) * values,
            PenaltyForm::Plain => {
                // At the origin any direction of the unit ball is a valid
                // sub-gradient; zero keeps a drained frame where it is.
                if spec.frob > f64::EPSILON {
                    g += (cfg.penalty / spec.frob) * values;
                }
            }
        }
    }
    g
}

/// `sum_{l in range} f(s_l) u_l v_l^T`.
fn scaled_outer_sum(
    t: &SvdTriple,
    range: std::ops::Range<usize>,
    f: impl Fn(f64) -> f64,
) -> DMatrix<f64> {
    let cols = range.len();
    let mut us = DMatrix::zeros(t.u.nrows(), cols);
    let mut vs = DMatrix::zeros(t.v.nrows(), cols);
    for (c, l) in range.enumerate() {
        us.column_mut(c).copy_from(&(f(t.s[l]) * t.u.column(l)));
        vs.column_mut(c).copy_from(&t.v.column(l));
    }
    us * vs.transpose()
}

/// Projects raw per-frame gradients onto directions that keep the weighted
/// reconstruction fixed: each frame sheds its share of the forward-shifted
/// gradient sum, pulled back along its own path. Afterwards the shifted
/// gradients cancel wherever the weights are active.
pub fn redistribute(
    grads: &[DMatrix<f64>],
    paths: &[FramePath],
    grid: &GridSpec,
    weights: &WeightMask,
    cfg: &ShiftConfig,
) -> Result<Vec<DMatrix<f64>>> {
    if grads.len() != paths.len() || grads.is_empty() {
        return Err(Error::FrameCountMismatch {
            frames: grads.len(),
            expected: paths.len(),
            what: "paths",
        });
    }
    let shifted = decomp::try_map_frames(grads.len(), |k| {
        shift::apply_matrix(&grads[k], grid, &paths[k], Direction::Forward, cfg)
    })?;
    let mut sum = DMatrix::zeros(grads[0].nrows(), grads[0].ncols());
    for s in &shifted {
        sum += s;
    }
    weights.apply_mut(&mut sum);
    let share = 1.0 / grads.len() as f64;
    decomp::try_map_frames(grads.len(), |k| {
        let pulled = shift::apply_matrix(&sum, grid, &paths[k], Direction::Inverse, cfg)?;
        Ok(&grads[k] - share * pulled)
    })
}

/// Raw per-frame gradients followed by [`redistribute`]: the constrained
/// descent direction is the negative of the result.
pub fn assemble_gradient(
    d: &Decomposition,
    ctx: &ProblemContext,
    cfg: &ObjectiveConfig,
) -> Result<Vec<DMatrix<f64>>> {
    let spectra = decompose_frames(d, cfg)?;
    let grads: Vec<DMatrix<f64>> = (0..d.num_frames())
        .map(|k| grad_frame(&d.frames[k].values, &spectra[k], cfg))
        .collect();
    redistribute(&grads, &d.paths, d.grid(), ctx.weights, ctx.shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::initial_guess;
    use crate::field::GridSpec;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn test_decomposition(seed: u64) -> (Decomposition, SnapshotField) {
        let grid = GridSpec::periodic(10, 7, 1.0, 1.0).unwrap();
        let q = SnapshotField::new(grid.clone(), random_matrix(10, 7, seed)).unwrap();
        let paths = vec![
            FramePath::constant_velocity(1.0, &grid),
            FramePath::constant_velocity(-1.0, &grid),
        ];
        let d = initial_guess(&q, &paths, &[2, 1], &crate::shift::ShiftConfig::exact()).unwrap();
        (d, q)
    }

    fn spectrum_of(values: &DMatrix<f64>, rank: usize, cfg: &ObjectiveConfig) -> FrameSpectrum {
        let grid = GridSpec::bounded(values.nrows(), values.ncols(), 1.0, 1.0).unwrap();
        let f = SnapshotField::new(grid.clone(), values.clone()).unwrap();
        let path = FramePath::new(vec![0.0; values.ncols()], "still");
        let d = Decomposition::new(vec![f], vec![path], vec![rank]).unwrap();
        decompose_frames(&d, cfg).unwrap().remove(0)
    }

    #[test]
    fn value_identities_between_kinds() {
        let a = random_matrix(9, 6, 3);
        let frac = frame_objective(&a, 2, &ObjectiveConfig::of_kind(ObjectiveKind::ResidualFraction)).unwrap();
        let energy = frame_objective(&a, 2, &ObjectiveConfig::of_kind(ObjectiveKind::ResidualEnergy)).unwrap();
        assert_relative_eq!(frac * a.norm_squared(), energy, max_relative = 1e-12);

        let nuclear = frame_objective(&a, 2, &ObjectiveConfig::of_kind(ObjectiveKind::Nuclear)).unwrap();
        let bound = frame_objective(&a, 2, &ObjectiveConfig::of_kind(ObjectiveKind::NuclearBound)).unwrap();
        assert!(bound >= nuclear - 1e-12);

        // Rank-1 matrix: nuclear norm is the Frobenius norm, residuals vanish.
        let one = random_matrix(9, 1, 4) * random_matrix(6, 1, 5).transpose();
        let n1 = frame_objective(&one, 1, &ObjectiveConfig::of_kind(ObjectiveKind::Nuclear)).unwrap();
        assert_relative_eq!(n1, one.norm(), max_relative = 1e-10);
        let e1 = frame_objective(&one, 1, &ObjectiveConfig::of_kind(ObjectiveKind::ResidualEnergy)).unwrap();
        assert!(e1 < 1e-12);
    }

    #[test]
    fn gradients_match_central_differences() {
        let a = random_matrix(8, 5, 11);
        let h = 1e-6;
        for kind in [
            ObjectiveKind::ResidualFraction,
            ObjectiveKind::ResidualEnergy,
            ObjectiveKind::Nuclear,
            ObjectiveKind::NuclearBound,
        ] {
            for form in [PenaltyForm::Squared, PenaltyForm::Plain] {
                let mut cfg = ObjectiveConfig::of_kind(kind);
                cfg.penalty = 0.05;
                cfg.penalty_form = form;
                let rank = 2;
                let spec = spectrum_of(&a, rank, &cfg);
                let g = grad_frame(&a, &spec, &cfg);
                let mut fd = DMatrix::zeros(8, 5);
                for j in 0..5 {
                    for i in 0..8 {
                        let mut p = a.clone();
                        p[(i, j)] += h;
                        let fp = frame_objective(&p, rank, &cfg).unwrap();
                        p[(i, j)] -= 2.0 * h;
                        let fm = frame_objective(&p, rank, &cfg).unwrap();
                        fd[(i, j)] = (fp - fm) / (2.0 * h);
                    }
                }
                let rel = (&g - &fd).norm() / fd.norm();
                assert!(rel < 1e-6, "{kind:?}/{form:?}: gradient mismatch {rel:.2e}");
            }
        }
    }

    #[test]
    fn evaluate_totals_and_error_terms_are_consistent() {
        let (d, q) = test_decomposition(17);
        let w = WeightMask::interior(&q.grid);
        let shift_cfg = crate::shift::ShiftConfig::exact();
        let ctx = ProblemContext {
            data: &q,
            weights: &w,
            shift: &shift_cfg,
        };
        let mut cfg = ObjectiveConfig::default();
        cfg.penalty = 0.1;
        let rep = evaluate(&d, &ctx, &cfg).unwrap();
        let norms2: f64 = d.frames.iter().map(|f| f.values.norm_squared()).sum();
        let sum: f64 = rep.per_frame.iter().sum();
        assert_relative_eq!(rep.total, sum + 0.1 * norms2, max_relative = 1e-12);

        // The initial guess satisfies the constraint in exact mode.
        assert!(rep.constraint_violation < 1e-12);
        let direct = decomp::residual(&d, &q, &w, &shift_cfg).unwrap().norm();
        assert_relative_eq!(rep.constraint_violation, direct);
        assert_relative_eq!(rep.rel_error, direct / q.values.norm(), max_relative = 1e-12);
    }

    #[test]
    fn zero_frame_is_rejected_by_the_normalized_kind() {
        let z = DMatrix::zeros(6, 4);
        assert!(matches!(
            frame_objective(&z, 1, &ObjectiveConfig::default()),
            Err(Error::ZeroNormFrame { .. })
        ));
        // The unnormalized kinds accept it.
        assert_eq!(
            frame_objective(&z, 1, &ObjectiveConfig::of_kind(ObjectiveKind::ResidualEnergy)).unwrap(),
            0.0
        );
    }

    #[test]
    fn redistributed_gradients_cancel_through_the_shifts() {
        let (d, q) = test_decomposition(23);
        let w = WeightMask::interior(&q.grid);
        let cfg = ObjectiveConfig::default();
        let shift_cfg = crate::shift::ShiftConfig::exact();
        let spectra = decompose_frames(&d, &cfg).unwrap();
        let raw: Vec<DMatrix<f64>> = (0..2)
            .map(|k| grad_frame(&d.frames[k].values, &spectra[k], &cfg))
            .collect();
        let tilde = redistribute(&raw, &d.paths, d.grid(), &w, &shift_cfg).unwrap();

        let mut sum = DMatrix::zeros(10, 7);
        for k in 0..2 {
            sum += crate::shift::apply_matrix(&tilde[k], d.grid(), &d.paths[k], Direction::Forward, &shift_cfg)
                .unwrap();
        }
        w.apply_mut(&mut sum);
        let scale: f64 = raw.iter().map(|g| g.norm()).sum();
        assert!(sum.norm() < 1e-13 * scale.max(1.0));
    }

    #[test]
    fn redistribution_is_idempotent() {
        let (d, q) = test_decomposition(29);
        let w = WeightMask::interior(&q.grid);
        let shift_cfg = crate::shift::ShiftConfig::exact();
        let cfg = ObjectiveConfig::default();
        let ctx = ProblemContext {
            data: &q,
            weights: &w,
            shift: &shift_cfg,
        };
        let once = assemble_gradient(&d, &ctx, &cfg).unwrap();
        let twice = redistribute(&once, &d.paths, d.grid(), &w, &shift_cfg).unwrap();
        for k in 0..2 {
            assert_relative_eq!((&twice[k] - &once[k]).norm(), 0.0, epsilon = 1e-12 * once[k].norm());
        }
    }

    #[test]
    fn penalty_gradient_is_linear_in_the_frame() {
        let a = random_matrix(7, 5, 31);
        let kind = ObjectiveKind::ResidualEnergy;
        let plain = ObjectiveConfig::of_kind(kind);
        let mut with_penalty = ObjectiveConfig::of_kind(kind);
        with_penalty.penalty = 0.25;
        let spec = spectrum_of(&a, 1, &plain);
        let g0 = grad_frame(&a, &spec, &plain);
        let g1 = grad_frame(&a, &spec, &with_penalty);
        assert_relative_eq!((&g1 - &g0 - 0.5 * &a).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn plain_penalty_pulls_with_constant_magnitude() {
        // The unsquared norm penalty contributes eps * q/||q||, so its gradient
        // has norm eps regardless of the frame's scale. That constant pull is
        // what lets it drain a redundant frame all the way to zero.
        let a = random_matrix(7, 5, 31);
        let kind = ObjectiveKind::ResidualEnergy;
        let bare = ObjectiveConfig::of_kind(kind);
        let mut cfg = ObjectiveConfig::of_kind(kind);
        cfg.penalty = 0.25;
        cfg.penalty_form = PenaltyForm::Plain;
        for scale in [1.0, 8.0] {
            let scaled = scale * &a;
            let spec = spectrum_of(&scaled, 1, &bare);
            let g0 = grad_frame(&scaled, &spec, &bare);
            let g1 = grad_frame(&scaled, &spec, &cfg);
            assert_relative_eq!((&g1 - &g0).norm(), 0.25, epsilon = 1e-12);
        }
        // A vanished frame must not divide by zero.
        let zero = DMatrix::zeros(7, 5);
        let spec = spectrum_of(&zero, 1, &bare);
        let g = grad_frame(&zero, &spec, &cfg);
        assert_eq!(g.amax(), 0.0);
    }
}
