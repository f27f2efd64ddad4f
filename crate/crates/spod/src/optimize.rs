//! Constrained descent on the frame contents.
//!
//! The variables are the stacked frame matrices. Each iteration factors the
//! frames, forms the redistributed gradient (which keeps the weighted
//! reconstruction fixed), picks a direction (steepest descent or L-BFGS),
//! and chooses a step along it with a doubling line search refined by a
//! parabolic fit. The step can be sized either from true objective samples
//! or from a first-order prediction of how the singular values move, which
//! costs no factorization per trial.
//!
//! Rank targets may grow over the run through a stage schedule; each stage
//! warm-starts from the previous frames. In interpolated-shift mode the
//! iterates are periodically projected back onto the constraint manifold.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::decomp::{self, Decomposition};
use crate::error::{Error, Result};
use crate::field::{FramePath, SnapshotField, WeightMask};
use crate::lowrank;
use crate::objective::{self, FrameSpectrum, ObjectiveConfig, ObjectiveKind, ProblemContext};
use crate::shift::{ShiftConfig, ShiftMode};

/// A decomposition task: the (extended) data, the transport paths, the rank
/// targets, and how reconstruction quality and the objective are measured.
#[derive(Debug, Clone)]
pub struct Problem {
    pub data: SnapshotField,
    pub paths: Vec<FramePath>,
    /// Target ranks; superseded by the stages of
    /// [`OptimizerConfig::schedule`] when that is non-empty.
    pub ranks: Vec<usize>,
    pub weights: WeightMask,
    pub shift: ShiftConfig,
    pub objective: ObjectiveConfig,
}

impl Problem {
    pub fn context(&self) -> ProblemContext<'_> {
        ProblemContext {
            data: &self.data,
            weights: &self.weights,
            shift: &self.shift,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Steepest,
    Lbfgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEstimator {
    /// Every trial step is scored by factoring the trial frames.
    ExactEval,
    /// Trial steps are scored from first-order singular value updates; only
    /// the accepted step is verified with a true factorization.
    SvdUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageTrigger {
    /// Advance after this many iterations in the stage.
    AfterIterations(usize),
    /// Advance once the relative objective decrease over the last `window`
    /// iterations of the stage falls below `rel_decrease`.
    OnSaturation { rel_decrease: f64, window: usize },
}

#[derive(Debug, Clone)]
pub struct RankStage {
    pub ranks: Vec<usize>,
    /// When to hand over to the next stage; ignored on the last stage.
    pub trigger: StageTrigger,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub method: Method,
    pub step: StepEstimator,
    pub max_iters: usize,
    /// Stop once the gradient norm falls to this fraction of its value at
    /// the first iteration.
    pub grad_tol: f64,
    /// Stop once the relative objective decrease of an iteration falls
    /// below this; zero disables the check.
    pub objective_tol: f64,
    /// L-BFGS history length.
    pub memory: usize,
    pub schedule: Vec<RankStage>,
    /// In interpolated-shift mode, restore the constraint every this many
    /// iterations. Zero disables reprojection.
    pub reproject_every: usize,
    /// Abort after this many consecutive iterations that end with a larger
    /// objective than they started with.
    pub divergence_patience: usize,
    /// First trial step: this fraction of `||data|| / ||direction||`.
    pub eta0_scale: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::Steepest,
            step: StepEstimator::ExactEval,
            max_iters: 500,
            grad_tol: 1e-10,
            objective_tol: 0.0,
            memory: 25,
            schedule: Vec::new(),
            reproject_every: 10,
            divergence_patience: 5,
            eta0_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Gradient norm reached its tolerance.
    GradientTol,
    /// Objective decrease per iteration reached its tolerance.
    ObjectiveTol,
    /// No step in the descent direction decreased the objective.
    Stationary,
    MaxIters,
    Diverged,
}

impl StopReason {
    pub fn is_converged(&self) -> bool {
        matches!(self, StopReason::GradientTol | StopReason::ObjectiveTol | StopReason::Stationary)
    }
}

/// One line of the convergence history.
#[derive(Debug, Clone)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub per_frame: Vec<f64>,
    pub grad_norm: f64,
    pub rel_error: f64,
    pub constraint_violation: f64,
    /// Cumulative count of frame factorizations so far.
    pub svd_evals: usize,
    /// Step accepted by the iteration that produced this state; zero for
    /// the initial record and after pure reprojections.
    pub step_size: f64,
    pub ranks: Vec<usize>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    /// Cumulative factorization count at the first record whose relative
    /// error is at or below `tol`.
    pub fn svd_evals_to_error(&self, tol: f64) -> Option<usize> {
        self.records.iter().find(|r| r.rel_error <= tol).map(|r| r.svd_evals)
    }

    /// Iteration index of the first record whose relative error is at or
    /// below `tol`.
    pub fn iterations_to_error(&self, tol: f64) -> Option<usize> {
        self.records.iter().find(|r| r.rel_error <= tol).map(|r| r.iteration)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub decomposition: Decomposition,
    pub trace: ConvergenceTrace,
    pub stop: StopReason,
    pub iterations: usize,
    pub svd_evals: usize,
}

const LINE_SEARCH_HALVINGS: usize = 30;
const MAX_DOUBLINGS: usize = 40;
const REPROJECT_TOL: f64 = 1e-8;
const REPROJECT_ROUNDS: usize = 3;

/// Runs the optimization from `warm` or from the even initial split.
pub fn run(problem: &Problem, cfg: &OptimizerConfig, warm: Option<Decomposition>) -> Result<RunOutcome> {
    validate_config(problem, cfg)?;
    let clock = Instant::now();
    let obj = &problem.objective;
    let mut svd_evals = 0usize;

    let mut stage_idx = 0usize;
    let mut stage_iters = 0usize;
    let mut stage_values: Vec<f64> = Vec::new();
    let ranks_of_stage = |idx: usize| -> &[usize] {
        if cfg.schedule.is_empty() {
            &problem.ranks
        } else {
            &cfg.schedule[idx].ranks
        }
    };

    let mut d = match warm {
        Some(mut w) => {
            w.paths = problem.paths.clone();
            w.ranks = ranks_of_stage(0).to_vec();
            w.validate()?;
            check_shapes(&w, problem)?;
            w
        }
        None => decomp::initial_guess(
            &problem.data,
            &problem.paths,
            ranks_of_stage(0),
            &problem.shift,
        )?,
    };

    let mut spectra = objective::decompose_frames(&d, obj)?;
    svd_evals += d.num_frames();
    let (mut j, mut per_frame) = objective::value_of_spectra(&spectra, obj)?;

    let mut trace = ConvergenceTrace::default();
    let mut lbfgs: VecDeque<Pair> = VecDeque::new();
    let mut prev_point: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut gnorm0: Option<f64> = None;
    let mut prev_j: Option<f64> = None;
    let mut rises = 0usize;
    let mut last_step = 0.0f64;
    let mut prev_eta: Option<f64> = None;

    let data_norm = problem.weights.apply(&problem.data.values).norm();
    let mut stop = StopReason::MaxIters;

    for it in 0..=cfg.max_iters {
        // Hand over to the next stage when its predecessor is done.
        if !cfg.schedule.is_empty() && stage_idx + 1 < cfg.schedule.len() {
            let fired = match cfg.schedule[stage_idx].trigger {
                StageTrigger::AfterIterations(n) => stage_iters >= n,
                StageTrigger::OnSaturation { rel_decrease, window } => {
                    stage_values.len() > window && {
                        let old = stage_values[stage_values.len() - 1 - window];
                        let new = *stage_values.last().unwrap();
                        (old - new) <= rel_decrease * old.abs().max(f64::MIN_POSITIVE)
                    }
                }
            };
            if fired {
                stage_idx += 1;
                stage_iters = 0;
                stage_values.clear();
                lbfgs.clear();
                prev_point = None;
                prev_j = None;
                prev_eta = None;
                d.ranks = ranks_of_stage(stage_idx).to_vec();
                d.validate()?;
                spectra = objective::decompose_frames(&d, obj)?;
                svd_evals += d.num_frames();
                (j, per_frame) = objective::value_of_spectra(&spectra, obj)?;
                log::info!("rank stage {stage_idx}: ranks now {:?}", d.ranks);
            }
        }

        let raw: Vec<DMatrix<f64>> = (0..d.num_frames())
            .map(|k| objective::grad_frame(&d.frames[k].values, &spectra[k], obj))
            .collect();
        let grad = objective::redistribute(&raw, &d.paths, d.grid(), &problem.weights, &problem.shift)?;
        let gnorm = frames_norm(&grad);
        let g0 = *gnorm0.get_or_insert(gnorm);

        if cfg.method == Method::Lbfgs {
            if let Some((px, pg)) = prev_point.take() {
                push_pair(&mut lbfgs, cfg.memory, &flatten(&d), &flatten_mats(&grad), &px, &pg);
            }
        }

        trace.records.push(TraceRecord {
            iteration: it,
            objective: j,
            per_frame: per_frame.clone(),
            grad_norm: gnorm,
            rel_error: truncated_rel_error(&d, &spectra, problem, data_norm)?,
            constraint_violation: decomp::residual(&d, &problem.data, &problem.weights, &problem.shift)?
                .norm(),
            svd_evals,
            step_size: last_step,
            ranks: d.ranks.clone(),
            wall_secs: clock.elapsed().as_secs_f64(),
        });
        stage_values.push(j);
        stage_iters += 1;

        if gnorm <= cfg.grad_tol * g0 {
            stop = StopReason::GradientTol;
            break;
        }
        if let Some(pj) = prev_j {
            if cfg.objective_tol > 0.0 && (pj - j).abs() <= cfg.objective_tol * pj.abs().max(f64::MIN_POSITIVE) {
                stop = StopReason::ObjectiveTol;
                break;
            }
            if j > pj {
                rises += 1;
                if rises >= cfg.divergence_patience {
                    stop = StopReason::Diverged;
                    break;
                }
            } else {
                rises = 0;
            }
        }
        prev_j = Some(j);
        if it == cfg.max_iters {
            stop = StopReason::MaxIters;
            break;
        }

        let mut dir = match cfg.method {
            Method::Steepest => grad.iter().map(|g| -g).collect::<Vec<_>>(),
            Method::Lbfgs => {
                let flat = two_loop(&flatten_mats(&grad), &lbfgs);
                let mut dir = unflatten(&flat, &grad);
                for m in &mut dir {
                    m.neg_mut();
                }
                if frames_dot(&dir, &grad) >= 0.0 {
                    lbfgs.clear();
                    dir = grad.iter().map(|g| -g).collect();
                }
                dir
            }
        };
        let dir_norm = frames_norm(&dir);
        if dir_norm == 0.0 {
            stop = StopReason::GradientTol;
            break;
        }
        for m in &mut dir {
            *m /= dir_norm;
        }
        // The direction is normalized, so eta is a displacement. L-BFGS with
        // history starts from its full quasi-Newton step; otherwise the
        // search warm-starts from twice the last accepted step, falling back
        // to a fixed fraction of the data scale on the first iteration.
        let eta0 = if cfg.method == Method::Lbfgs && !lbfgs.is_empty() {
            dir_norm
        } else {
            match prev_eta {
                Some(e) => 2.0 * e,
                None => cfg.eta0_scale * data_norm,
            }
        };

        if cfg.method == Method::Lbfgs {
            prev_point = Some((flatten(&d), flatten_mats(&grad)));
        }

        let accepted = match cfg.step {
            StepEstimator::ExactEval => {
                let mut count = 0usize;
                let res = parabolic_search(j, eta0, |eta| {
                    count += d.num_frames();
                    let trial = offset_frames(&d, &dir, eta);
                    let sp = objective::decompose_frames(&trial, obj)?;
                    let (tj, tper) = objective::value_of_spectra(&sp, obj)?;
                    Ok((tj, EvalSample { d: trial, spectra: sp, per_frame: tper }))
                })?;
                svd_evals += count;
                res
            }
            StepEstimator::SvdUpdate => {
                let predictor = build_predictor(&d, &spectra, &dir, obj)?;
                let predicted = parabolic_search(j, eta0, |eta| Ok((predictor(eta), ())))?;
                match predicted {
                    Search::Stationary => Search::Stationary,
                    Search::Accepted { mut eta, .. } => {
                        let mut found = None;
                        for _ in 0..=LINE_SEARCH_HALVINGS {
                            let trial = offset_frames(&d, &dir, eta);
                            let sp = objective::decompose_frames(&trial, obj)?;
                            svd_evals += d.num_frames();
                            let (tj, tper) = objective::value_of_spectra(&sp, obj)?;
                            if tj < j {
                                found = Some(Search::Accepted {
                                    eta,
                                    value: tj,
                                    sample: EvalSample { d: trial, spectra: sp, per_frame: tper },
                                });
                                break;
                            }
                            eta *= 0.5;
                        }
                        found.unwrap_or(Search::Stationary)
                    }
                }
            }
        };

        let (eta, new_j, sample) = match accepted {
            Search::Stationary => {
                stop = StopReason::Stationary;
                break;
            }
            Search::Accepted { eta, value, sample } => (eta, value, sample),
        };
        d = sample.d;
        spectra = sample.spectra;
        per_frame = sample.per_frame;
        j = new_j;
        last_step = eta;
        prev_eta = Some(eta);

        // Interpolation lets iterates drift off the constraint; pull them
        // back now and then.
        if problem.shift.mode == ShiftMode::Interpolated
            && cfg.reproject_every > 0
            && (it + 1) % cfg.reproject_every == 0
        {
            let mut projected = false;
            for _ in 0..REPROJECT_ROUNDS {
                let viol = decomp::residual(&d, &problem.data, &problem.weights, &problem.shift)?.norm();
                if viol <= REPROJECT_TOL * data_norm {
                    break;
                }
                d = decomp::project_constraint(&d, &problem.data, &problem.weights, &problem.shift)?;
                projected = true;
            }
            if projected {
                spectra = objective::decompose_frames(&d, obj)?;
                svd_evals += d.num_frames();
                (j, per_frame) = objective::value_of_spectra(&spectra, obj)?;
            }
        }
    }

    let iterations = trace.records.last().map_or(0, |r| r.iteration);
    Ok(RunOutcome {
        decomposition: d,
        trace,
        stop,
        iterations,
        svd_evals,
    })
}

/// Error of the rank-truncated reconstruction,
/// `||w .* (q - sum_k T[path_k] trunc_{r_k}(q_k))|| / ||w .* q||`.
///
/// This is the error that matters once the run ends: the full frames always
/// satisfy the constraint (exactly, in exact-shift mode), so the residual of
/// their truncations is what measures how low-rank the frames have become.
fn truncated_rel_error(
    d: &Decomposition,
    spectra: &[FrameSpectrum],
    problem: &Problem,
    data_norm: f64,
) -> Result<f64> {
    let grid = d.grid();
    let mut rec = DMatrix::zeros(grid.rows(), grid.n);
    for (k, spec) in spectra.iter().enumerate() {
        let trunc = spec.triple.reconstruct_leading(spec.rank);
        rec += crate::shift::apply_matrix(&trunc, grid, &d.paths[k], crate::shift::Direction::Forward, &problem.shift)?;
    }
    let mut diff = &problem.data.values - rec;
    problem.weights.apply_mut(&mut diff);
    Ok(diff.norm() / data_norm)
}

fn validate_config(problem: &Problem, cfg: &OptimizerConfig) -> Result<()> {
    if problem.paths.is_empty() {
        return Err(Error::EmptyDecomposition);
    }
    if cfg.schedule.is_empty() && problem.ranks.len() != problem.paths.len() {
        return Err(Error::FrameCountMismatch {
            frames: problem.ranks.len(),
            expected: problem.paths.len(),
            what: "ranks",
        });
    }
    for st in &cfg.schedule {
        if st.ranks.len() != problem.paths.len() {
            return Err(Error::FrameCountMismatch {
                frames: st.ranks.len(),
                expected: problem.paths.len(),
                what: "ranks",
            });
        }
    }
    if cfg.method == Method::Lbfgs && cfg.memory == 0 {
        return Err(Error::InvalidConfig("L-BFGS memory must be at least 1".into()));
    }
    if problem.objective.kind == ObjectiveKind::Nuclear {
        let g = &problem.data.grid;
        if g.rows() > problem.objective.spectrum_cap || g.n > problem.objective.spectrum_cap {
            return Err(Error::SpectrumCapExceeded {
                rows: g.rows(),
                cols: g.n,
                cap: problem.objective.spectrum_cap,
            });
        }
    }
    if problem.weights.apply(&problem.data.values).norm() == 0.0 {
        return Err(Error::InvalidConfig("data has zero norm under the weights".into()));
    }
    Ok(())
}

fn check_shapes(d: &Decomposition, problem: &Problem) -> Result<()> {
    let g = d.grid();
    if g.rows() != problem.data.grid.rows() || g.n != problem.data.grid.n {
        return Err(Error::ShapeMismatch {
            rows: g.rows(),
            cols: g.n,
            expected_rows: problem.data.grid.rows(),
            expected_cols: problem.data.grid.n,
        });
    }
    Ok(())
}

struct EvalSample {
    d: Decomposition,
    spectra: Vec<FrameSpectrum>,
    per_frame: Vec<f64>,
}

enum Search<S> {
    Accepted { eta: f64, value: f64, sample: S },
    Stationary,
}

/// Doubling line search with a parabolic refinement.
///
/// Starting from `eta0`, the step is halved until the objective drops below
/// `j0` (giving up after [`LINE_SEARCH_HALVINGS`] tries), then doubled while
/// it keeps dropping. A parabola through the last three samples proposes the
/// final step, kept only if it beats the best sample.
fn parabolic_search<S>(
    j0: f64,
    eta0: f64,
    mut f: impl FnMut(f64) -> Result<(f64, S)>,
) -> Result<Search<S>> {
    let mut eta = eta0;
    let mut first = None;
    for _ in 0..=LINE_SEARCH_HALVINGS {
        let (v, s) = f(eta)?;
        if v < j0 {
            first = Some((eta, v, s));
            break;
        }
        eta *= 0.5;
    }
    let Some((eta1, v1, s1)) = first else {
        return Ok(Search::Stationary);
    };

    // Keep doubling while the objective falls; remember the last three
    // samples (starting from the origin) for the parabola.
    let mut pts = vec![(0.0, j0), (eta1, v1)];
    let mut best = Search::Accepted { eta: eta1, value: v1, sample: s1 };
    let mut best_v = v1;
    for _ in 0..MAX_DOUBLINGS {
        let (last_eta, last_v) = *pts.last().unwrap();
        let next_eta = 2.0 * last_eta;
        let (v, s) = f(next_eta)?;
        pts.push((next_eta, v));
        if v < best_v {
            best_v = v;
            best = Search::Accepted { eta: next_eta, value: v, sample: s };
        }
        if v >= last_v {
            break;
        }
    }

    let k = pts.len();
    let (ea, ja) = pts[k - 3];
    let (eb, jb) = pts[k - 2];
    let (ec, jc) = pts[k - 1];
    if let Some(ev) = parabola_vertex(ea, ja, eb, jb, ec, jc) {
        if ev.is_finite() && ev > 0.0 {
            let (v, s) = f(ev)?;
            if v < best_v {
                return Ok(Search::Accepted { eta: ev, value: v, sample: s });
            }
        }
    }
    Ok(best)
}

/// Vertex of the parabola through three points, if it opens upward.
fn parabola_vertex(x1: f64, y1: f64, x2: f64, y2: f64, x3: f64, y3: f64) -> Option<f64> {
    let d21 = (y2 - y1) / (x2 - x1);
    let d32 = (y3 - y2) / (x3 - x2);
    let curv = (d32 - d21) / (x3 - x1);
    if !(curv.is_finite() && curv > 0.0) {
        return None;
    }
    Some(0.5 * (x1 + x2 - d21 / curv))
}

/// First-order model of the objective along `dir`: singular values move
/// linearly with the step, frame norms exactly (they are quadratic in it).
fn build_predictor(
    d: &Decomposition,
    spectra: &[FrameSpectrum],
    dir: &[DMatrix<f64>],
    obj: &ObjectiveConfig,
) -> Result<impl Fn(f64) -> f64> {
    struct FrameModel {
        s: Vec<f64>,
        gamma: Vec<f64>,
        norm2: f64,
        cross: f64,
        dir2: f64,
        rank: usize,
        min_dim: usize,
    }
    let mut models = Vec::with_capacity(spectra.len());
    for (k, spec) in spectra.iter().enumerate() {
        let gamma = lowrank::singular_value_update(&spec.triple, &dir[k])?;
        models.push(FrameModel {
            s: spec.triple.s.iter().cloned().collect(),
            gamma: gamma.iter().cloned().collect(),
            norm2: spec.frob * spec.frob,
            cross: d.frames[k].values.dot(&dir[k]),
            dir2: dir[k].norm_squared(),
            rank: spec.rank,
            min_dim: spec.min_dim,
        });
    }
    let cfg = obj.clone();
    Ok(move |eta: f64| -> f64 {
        let mut total = 0.0;
        for m in &models {
            let s_pred: Vec<f64> = m
                .s
                .iter()
                .zip(&m.gamma)
                .map(|(s, g)| (s + eta * g).max(0.0))
                .collect();
            let norm2 = (m.norm2 + 2.0 * eta * m.cross + eta * eta * m.dir2).max(0.0);
            // Predicted tail via norm minus head: trial scores tolerate the
            // cancellation because every accepted step is re-verified with a
            // true factorization.
            let head: f64 = s_pred.iter().take(m.rank).map(|x| x * x).sum();
            let tail_sq = (norm2 - head).max(0.0);
            total += objective::value_from_parts(&s_pred, norm2.sqrt(), tail_sq, m.rank, m.min_dim, cfg.kind);
            if cfg.penalty != 0.0 {
                total += objective::penalty_value(norm2.sqrt(), &cfg);
            }
        }
        total
    })
}

fn offset_frames(d: &Decomposition, dir: &[DMatrix<f64>], eta: f64) -> Decomposition {
    let frames = d
        .frames
        .iter()
        .zip(dir)
        .map(|(f, g)| SnapshotField {
            grid: f.grid.clone(),
            values: &f.values + eta * g,
        })
        .collect();
    Decomposition {
        frames,
        paths: d.paths.clone(),
        ranks: d.ranks.clone(),
    }
}

fn frames_norm(mats: &[DMatrix<f64>]) -> f64 {
    mats.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn frames_dot(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn flatten(d: &Decomposition) -> Vec<f64> {
    let mut out = Vec::new();
    for f in &d.frames {
        out.extend_from_slice(f.values.as_slice());
    }
    out
}

fn flatten_mats(mats: &[DMatrix<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for m in mats {
        out.extend_from_slice(m.as_slice());
    }
    out
}

fn unflatten(flat: &[f64], like: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(like.len());
    let mut at = 0;
    for m in like {
        let len = m.len();
        out.push(DMatrix::from_column_slice(m.nrows(), m.ncols(), &flat[at..at + len]));
        at += len;
    }
    out
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn push_pair(hist: &mut VecDeque<Pair>, memory: usize, x: &[f64], g: &[f64], px: &[f64], pg: &[f64]) {
    let s: Vec<f64> = x.iter().zip(px).map(|(a, b)| a - b).collect();
    let y: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
    let ys = dot(&y, &s);
    let scale = norm(&y) * norm(&s);
    // Curvature must be positive for the update to stay well posed.
    if ys > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        if hist.len() == memory {
            hist.pop_front();
        }
        hist.push_back(Pair { s, y, rho: 1.0 / ys });
    }
}

/// Standard two-loop recursion: returns an approximation of `H * g`.
fn two_loop(g: &[f64], hist: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = g.to_vec();
    if hist.is_empty() {
        return q;
    }
    let mut alphas = Vec::with_capacity(hist.len());
    for p in hist.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        axpy(&mut q, -a, &p.y);
        alphas.push(a);
    }
    let last = hist.back().unwrap();
    let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
    for v in &mut q {
        *v *= gamma;
    }
    for (p, &a) in hist.iter().zip(alphas.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        axpy(&mut q, a - b, &p.s);
    }
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
