//! Run configuration: a TOML document whose every key has a matching
//! command-line flag, with flags taking precedence over the file.
//!
//! All fields are optional at this layer so that merging can tell "unset"
//! from "set to the default"; [`Resolved`] applies defaults and checks the
//! combination makes sense.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spod::field::{FramePath, SnapshotField};
use spod::generate::{self, BoundaryKind, GeneratedCase};
use spod::objective::{ObjectiveConfig, ObjectiveKind, PenaltyForm};
use spod::optimize::{Method, OptimizerConfig, RankStage, StageTrigger, StepEstimator};
use spod::shift::{EdgePolicy, ShiftConfig, ShiftMode};
use spod::{GridSpec, WeightMask};

use crate::fail::{CmdResult, Fail};
use crate::files::{self, MatrixFormat};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct RunConfig {
    pub input: InputSection,
    pub paths: PathsSection,
    pub objective: ObjectiveSection,
    pub optimizer: OptimizerSection,
    pub shift: ShiftSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct InputSection {
    /// Matrix file; mutually exclusive with `generator`.
    pub file: Option<PathBuf>,
    /// Analytic case name; see `spod generate --help` for the list.
    pub generator: Option<String>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    /// Diffusion constant of the `diffusive` generator.
    pub mu: Option<f64>,
    /// Size of the `identity` generator.
    pub d: Option<usize>,
    /// Grid of a matrix file when it has no sidecar.
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub bounded: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct PathsSection {
    /// CSV of per-snapshot shifts, one column per frame.
    pub file: Option<PathBuf>,
    /// Constant-velocity frames.
    pub velocities: Option<Vec<f64>>,
    /// Front detector spec: `peak`, `rising:LEVEL`, or `falling:LEVEL`;
    /// detects a single frame path from the data.
    pub detect: Option<String>,
    /// Row window `A..B` the detector searches.
    pub detect_rows: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct ObjectiveSection {
    /// `j2`, `bar-j2`, `j1`, or `j12`.
    pub kind: Option<String>,
    pub ranks: Option<Vec<usize>>,
    pub penalty: Option<f64>,
    /// `squared` or `plain`.
    pub penalty_form: Option<String>,
    pub singular_cutoff: Option<f64>,
    pub spectrum_cap: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct OptimizerSection {
    /// `steepest` or `lbfgs`.
    pub method: Option<String>,
    /// Trial-step scoring: `exact` or `svd-update`.
    pub step: Option<String>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub objective_tol: Option<f64>,
    pub memory: Option<usize>,
    pub reproject_every: Option<usize>,
    pub divergence_patience: Option<usize>,
    pub eta0_scale: Option<f64>,
    /// Rank staging; the last stage's trigger is ignored.
    pub stages: Option<Vec<StageSection>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct StageSection {
    pub ranks: Vec<usize>,
    /// Advance after this many iterations...
    pub iterations: Option<usize>,
    /// ...or once the objective saturates.
    pub saturation: Option<SaturationSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SaturationSection {
    pub rel_decrease: f64,
    pub window: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct ShiftSection {
    /// `exact` or `interpolated`.
    pub mode: Option<String>,
    /// Lagrange stencil width (even), interpolated mode only.
    pub order: Option<usize>,
    /// Boundary reads on bounded grids: `zero`, `replicate`, or a number.
    pub edge: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    /// `csv` or `binary`.
    pub format: Option<String>,
    /// Any of `matrices`, `spectra`, `trace`, `report`.
    pub emit: Option<Vec<String>>,
}

fn take<T>(field: &mut Option<T>, over: Option<T>) {
    if over.is_some() {
        *field = over;
    }
}

impl RunConfig {
    pub fn from_file(path: &std::path::Path) -> CmdResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Fail::data(format!("reading {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Fail::data(format!("{}: {e}", path.display())))
    }

    /// Lays `over` (the command-line flags) on top of `self` field by field.
    pub fn merge(mut self, over: RunConfig) -> Self {
        take(&mut self.input.file, over.input.file);
        take(&mut self.input.generator, over.input.generator);
        take(&mut self.input.m, over.input.m);
        take(&mut self.input.n, over.input.n);
        take(&mut self.input.mu, over.input.mu);
        take(&mut self.input.d, over.input.d);
        take(&mut self.input.dx, over.input.dx);
        take(&mut self.input.dt, over.input.dt);
        take(&mut self.input.bounded, over.input.bounded);
        take(&mut self.paths.file, over.paths.file);
        take(&mut self.paths.velocities, over.paths.velocities);
        take(&mut self.paths.detect, over.paths.detect);
        take(&mut self.paths.detect_rows, over.paths.detect_rows);
        take(&mut self.objective.kind, over.objective.kind);
        take(&mut self.objective.ranks, over.objective.ranks);
        take(&mut self.objective.penalty, over.objective.penalty);
        take(&mut self.objective.penalty_form, over.objective.penalty_form);
        take(&mut self.objective.singular_cutoff, over.objective.singular_cutoff);
        take(&mut self.objective.spectrum_cap, over.objective.spectrum_cap);
        take(&mut self.optimizer.method, over.optimizer.method);
        take(&mut self.optimizer.step, over.optimizer.step);
        take(&mut self.optimizer.max_iters, over.optimizer.max_iters);
        take(&mut self.optimizer.grad_tol, over.optimizer.grad_tol);
        take(&mut self.optimizer.objective_tol, over.optimizer.objective_tol);
        take(&mut self.optimizer.memory, over.optimizer.memory);
        take(&mut self.optimizer.reproject_every, over.optimizer.reproject_every);
        take(&mut self.optimizer.divergence_patience, over.optimizer.divergence_patience);
        take(&mut self.optimizer.eta0_scale, over.optimizer.eta0_scale);
        take(&mut self.optimizer.stages, over.optimizer.stages);
        take(&mut self.shift.mode, over.shift.mode);
        take(&mut self.shift.order, over.shift.order);
        take(&mut self.shift.edge, over.shift.edge);
        take(&mut self.output.dir, over.output.dir);
        take(&mut self.output.format, over.output.format);
        take(&mut self.output.emit, over.output.emit);
        self
    }
}

/// Which artifact groups `decompose` writes.
#[derive(Debug, Clone, Copy)]
pub struct Emit {
    pub matrices: bool,
    pub spectra: bool,
    pub trace: bool,
    pub report: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Emit {
            matrices: true,
            spectra: true,
            trace: true,
            report: true,
        }
    }
}

/// A fully validated run: data on its grid, one path per frame, and the
/// library configs ready to hand to the optimizer.
pub struct Resolved {
    pub data: SnapshotField,
    pub paths: Vec<FramePath>,
    pub ranks: Vec<usize>,
    pub objective: ObjectiveConfig,
    pub optimizer: OptimizerConfig,
    pub shift: ShiftConfig,
    pub out_dir: PathBuf,
    pub format: MatrixFormat,
    pub emit: Emit,
    /// The configuration that produced this run, for the reproducibility
    /// record.
    pub record: RunConfig,
}

pub fn parse_objective_kind(s: &str) -> CmdResult<ObjectiveKind> {
    match s {
        "j2" => Ok(ObjectiveKind::ResidualFraction),
        "bar-j2" | "barj2" => Ok(ObjectiveKind::ResidualEnergy),
        "j1" => Ok(ObjectiveKind::Nuclear),
        "j12" => Ok(ObjectiveKind::NuclearBound),
        other => Err(Fail::usage(format!(
            "unknown objective {other:?}; use j2, bar-j2, j1, or j12"
        ))),
    }
}

fn parse_shift_mode(s: &str) -> CmdResult<ShiftMode> {
    match s {
        "exact" => Ok(ShiftMode::Exact),
        "interpolated" => Ok(ShiftMode::Interpolated),
        other => Err(Fail::usage(format!(
            "unknown shift mode {other:?}; use exact or interpolated"
        ))),
    }
}

fn parse_edge(s: &str) -> CmdResult<EdgePolicy> {
    match s {
        "zero" => Ok(EdgePolicy::Constant(0.0)),
        "replicate" => Ok(EdgePolicy::Replicate),
        other => other.parse::<f64>().map(EdgePolicy::Constant).map_err(|_| {
            Fail::usage(format!(
                "unknown edge policy {other:?}; use zero, replicate, or a number"
            ))
        }),
    }
}

fn parse_method(s: &str) -> CmdResult<Method> {
    match s {
        "steepest" => Ok(Method::Steepest),
        "lbfgs" | "quasi-newton" => Ok(Method::Lbfgs),
        other => Err(Fail::usage(format!(
            "unknown method {other:?}; use steepest or lbfgs"
        ))),
    }
}

fn parse_step(s: &str) -> CmdResult<StepEstimator> {
    match s {
        "exact" => Ok(StepEstimator::ExactEval),
        "svd-update" => Ok(StepEstimator::SvdUpdate),
        other => Err(Fail::usage(format!(
            "unknown step estimator {other:?}; use exact or svd-update"
        ))),
    }
}

fn parse_penalty_form(s: &str) -> CmdResult<PenaltyForm> {
    match s {
        "squared" => Ok(PenaltyForm::Squared),
        "plain" => Ok(PenaltyForm::Plain),
        other => Err(Fail::usage(format!(
            "unknown penalty form {other:?}; use squared or plain"
        ))),
    }
}

fn parse_emit(items: &[String]) -> CmdResult<Emit> {
    let mut emit = Emit {
        matrices: false,
        spectra: false,
        trace: false,
        report: false,
    };
    for item in items {
        match item.as_str() {
            "matrices" => emit.matrices = true,
            "spectra" => emit.spectra = true,
            "trace" => emit.trace = true,
            "report" => emit.report = true,
            "all" => emit = Emit::default(),
            other => {
                return Err(Fail::usage(format!(
                    "unknown emit group {other:?}; use matrices, spectra, trace, report, or all"
                )))
            }
        }
    }
    Ok(emit)
}

/// Builds a generated case from the input section.
pub fn build_case(input: &InputSection) -> CmdResult<GeneratedCase> {
    let name = input
        .generator
        .as_deref()
        .ok_or_else(|| Fail::usage("no generator named"))?;
    let m = input.m;
    let n = input.n;
    let case = match name {
        "two-wave" => generate::two_crossing_waves(m.unwrap_or(100), n.unwrap_or(50))?,
        "diffusive" => generate::two_diffusing_pulses(
            m.unwrap_or(100),
            n.unwrap_or(50),
            input.mu.unwrap_or(generate::DIFFUSION_DEFAULT),
        )?,
        "leaving" => generate::boundary_case(BoundaryKind::Leaving, m.unwrap_or(101), n.unwrap_or(61))?,
        "reflected" => {
            generate::boundary_case(BoundaryKind::Reflected, m.unwrap_or(71), n.unwrap_or(41))?
        }
        "identity" => generate::identity_case(input.d.unwrap_or(50))?,
        "fronts" => generate::front_surrogate(m.unwrap_or(1024), n.unwrap_or(500))?,
        other => {
            return Err(Fail::usage(format!(
                "unknown generator {other:?}; use two-wave, diffusive, leaving, reflected, identity, or fronts"
            )))
        }
    };
    Ok(case)
}

fn parse_detector(spec: &str, rows: Option<&str>) -> CmdResult<spod::analyze::FrontDetector> {
    use spod::analyze::{CrossingDirection, FrontDetector, SearchWindow};
    let mut det = if spec == "peak" {
        FrontDetector::peak()
    } else if let Some(level) = spec.strip_prefix("rising:") {
        let level: f64 = level
            .parse()
            .map_err(|_| Fail::usage(format!("bad detector level in {spec:?}")))?;
        FrontDetector::threshold(level, CrossingDirection::Rising)
    } else if let Some(level) = spec.strip_prefix("falling:") {
        let level: f64 = level
            .parse()
            .map_err(|_| Fail::usage(format!("bad detector level in {spec:?}")))?;
        FrontDetector::threshold(level, CrossingDirection::Falling)
    } else {
        return Err(Fail::usage(format!(
            "unknown detector {spec:?}; use peak, rising:LEVEL, or falling:LEVEL"
        )));
    };
    if let Some(rows) = rows {
        let (a, b) = rows
            .split_once("..")
            .ok_or_else(|| Fail::usage(format!("bad row window {rows:?}; use A..B")))?;
        let a: usize = a.trim().parse().map_err(|_| Fail::usage(format!("bad row window {rows:?}")))?;
        let b: usize = b.trim().parse().map_err(|_| Fail::usage(format!("bad row window {rows:?}")))?;
        det = det.with_window(SearchWindow::Fixed(a..b));
    }
    Ok(det)
}

/// Turns a merged configuration into a validated, ready-to-run instance.
pub fn resolve(cfg: RunConfig) -> CmdResult<Resolved> {
    // Input: exactly one source.
    let (data, case) = match (&cfg.input.file, &cfg.input.generator) {
        (Some(_), Some(_)) => {
            return Err(Fail::usage("give either input.file or input.generator, not both"))
        }
        (None, None) => return Err(Fail::usage("no input: set input.file or input.generator")),
        (Some(path), None) => {
            let (values, grid) = files::read_matrix(path)?;
            let grid = match grid {
                Some(g) => {
                    if g.is_extended() {
                        return Err(Fail::data(format!(
                            "{}: decompose expects data on the physical grid, not an extended one",
                            path.display()
                        )));
                    }
                    g
                }
                None => {
                    let dx = cfg.input.dx.unwrap_or(1.0);
                    let dt = cfg.input.dt.unwrap_or(1.0);
                    if cfg.input.bounded.unwrap_or(false) {
                        GridSpec::bounded(values.nrows(), values.ncols(), dx, dt)?
                    } else {
                        GridSpec::periodic(values.nrows(), values.ncols(), dx, dt)?
                    }
                }
            };
            (SnapshotField::new(grid, values)?, None)
        }
        (None, Some(_)) => {
            let case = build_case(&cfg.input)?;
            (case.data.clone(), Some(case))
        }
    };

    // Paths: at least one frame, from exactly one source; a generated case
    // supplies its own unless overridden.
    let grid = data.grid.clone();
    let named = [
        cfg.paths.file.is_some(),
        cfg.paths.velocities.is_some(),
        cfg.paths.detect.is_some(),
    ]
    .iter()
    .filter(|x| **x)
    .count();
    if named > 1 {
        return Err(Fail::usage(
            "give at most one of paths.file, paths.velocities, paths.detect",
        ));
    }
    let paths: Vec<FramePath> = if let Some(p) = &cfg.paths.file {
        files::read_paths(p)?
    } else if let Some(vs) = &cfg.paths.velocities {
        vs.iter().map(|&c| FramePath::constant_velocity(c, &grid)).collect()
    } else if let Some(spec) = &cfg.paths.detect {
        let det = parse_detector(spec, cfg.paths.detect_rows.as_deref())?;
        vec![spod::analyze::detect_front_path(&data, &det)?]
    } else if let Some(case) = &case {
        case.paths.clone()
    } else {
        return Err(Fail::usage(
            "no frame paths: set paths.file, paths.velocities, or paths.detect",
        ));
    };
    if paths.is_empty() {
        return Err(Fail::usage("the paths file names zero frames"));
    }
    for (k, p) in paths.iter().enumerate() {
        if p.len() != grid.n {
            return Err(Fail::data(format!(
                "path {k} has {} entries but the data has {} snapshots",
                p.len(),
                grid.n
            )));
        }
    }

    // Ranks: explicit, or the generated case's, or one mode per frame.
    let ranks = match (&cfg.objective.ranks, &case) {
        (Some(r), _) => r.clone(),
        (None, Some(c)) => c.ranks.clone(),
        (None, None) => vec![1; paths.len()],
    };
    if ranks.len() != paths.len() {
        return Err(Fail::usage(format!(
            "{} ranks for {} frames",
            ranks.len(),
            paths.len()
        )));
    }

    let defaults = ObjectiveConfig::default();
    let objective = ObjectiveConfig {
        kind: match &cfg.objective.kind {
            Some(s) => parse_objective_kind(s)?,
            None => defaults.kind,
        },
        penalty: cfg.objective.penalty.unwrap_or(defaults.penalty),
        penalty_form: match &cfg.objective.penalty_form {
            Some(s) => parse_penalty_form(s)?,
            None => defaults.penalty_form,
        },
        singular_cutoff: cfg.objective.singular_cutoff.unwrap_or(defaults.singular_cutoff),
        spectrum_cap: cfg.objective.spectrum_cap.unwrap_or(defaults.spectrum_cap),
    };

    let schedule: Vec<RankStage> = match &cfg.optimizer.stages {
        None => Vec::new(),
        Some(stages) => stages
            .iter()
            .map(|s| -> CmdResult<RankStage> {
                let trigger = match (&s.iterations, &s.saturation) {
                    (Some(_), Some(_)) => {
                        return Err(Fail::usage(
                            "a stage takes iterations or saturation, not both",
                        ))
                    }
                    (Some(it), None) => StageTrigger::AfterIterations(*it),
                    (None, Some(sat)) => StageTrigger::OnSaturation {
                        rel_decrease: sat.rel_decrease,
                        window: sat.window,
                    },
                    // Fine for the last stage, whose trigger is never read.
                    (None, None) => StageTrigger::AfterIterations(usize::MAX),
                };
                Ok(RankStage {
                    ranks: s.ranks.clone(),
                    trigger,
                })
            })
            .collect::<CmdResult<_>>()?,
    };

    let base = OptimizerConfig::default();
    let optimizer = OptimizerConfig {
        method: match &cfg.optimizer.method {
            Some(s) => parse_method(s)?,
            None => base.method,
        },
        step: match &cfg.optimizer.step {
            Some(s) => parse_step(s)?,
            None => base.step,
        },
        max_iters: cfg.optimizer.max_iters.unwrap_or(base.max_iters),
        grad_tol: cfg.optimizer.grad_tol.unwrap_or(base.grad_tol),
        objective_tol: cfg.optimizer.objective_tol.unwrap_or(base.objective_tol),
        memory: cfg.optimizer.memory.unwrap_or(base.memory),
        schedule,
        reproject_every: cfg.optimizer.reproject_every.unwrap_or(base.reproject_every),
        divergence_patience: cfg
            .optimizer
            .divergence_patience
            .unwrap_or(base.divergence_patience),
        eta0_scale: cfg.optimizer.eta0_scale.unwrap_or(base.eta0_scale),
    };

    let shift_defaults = ShiftConfig::default();
    let shift = ShiftConfig {
        mode: match &cfg.shift.mode {
            Some(s) => parse_shift_mode(s)?,
            // Exact transport when every shift lands on whole cells,
            // interpolation otherwise.
            None => {
                let integral = paths.iter().all(|p| {
                    p.cells(grid.dx).all(|c| (c - c.round()).abs() < 1e-9)
                });
                if integral {
                    ShiftMode::Exact
                } else {
                    ShiftMode::Interpolated
                }
            }
        },
        order: cfg.shift.order.unwrap_or(shift_defaults.order),
        edge: match &cfg.shift.edge {
            Some(s) => parse_edge(s)?,
            None => EdgePolicy::Constant(0.0),
        },
    };

    let emit = match &cfg.output.emit {
        Some(items) => parse_emit(items)?,
        None => Emit::default(),
    };
    let format: MatrixFormat = match &cfg.output.format {
        Some(s) => s.parse()?,
        None => MatrixFormat::Csv,
    };
    let out_dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));

    Ok(Resolved {
        data,
        paths,
        ranks,
        objective,
        optimizer,
        shift,
        out_dir,
        format,
        emit,
        record: cfg,
    })
}

/// Interior mask sized for `grid`, shared by commands that do not extend.
pub fn interior_weights(grid: &GridSpec) -> WeightMask {
    WeightMask::interior(grid)
}
