//! `spod decompose`: run the optimizer and write its artifacts.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use spod::analyze;
use spod::decomp;
use spod::optimize::{self, Problem, StopReason};

use crate::config::{
    resolve, OptimizerSection, RunConfig, SaturationSection, StageSection,
};
use crate::fail::{CmdResult, Fail};
use crate::files;

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    /// TOML run configuration; flags below override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Snapshot matrix file (csv or binary).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Analytic case instead of a file: two-wave, diffusive, leaving,
    /// reflected, identity, fronts.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Diffusion constant (diffusive generator).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Size (identity generator).
    #[arg(long)]
    pub d: Option<usize>,
    /// Cell size of a sidecar-less matrix file.
    #[arg(long)]
    pub dx: Option<f64>,
    /// Snapshot spacing of a sidecar-less matrix file.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Treat a sidecar-less matrix file as a bounded domain.
    #[arg(long)]
    pub bounded: bool,

    /// Shifts file: one line per snapshot, one column per frame.
    #[arg(long)]
    pub paths_file: Option<PathBuf>,
    /// Constant frame velocities, e.g. --velocities 1,-1.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub velocities: Option<Vec<f64>>,
    /// Detect a single frame path: peak, rising:LEVEL, or falling:LEVEL.
    #[arg(long)]
    pub detect: Option<String>,
    /// Row window A..B the detector searches.
    #[arg(long)]
    pub detect_rows: Option<String>,

    /// Objective: j2, bar-j2, j1, or j12.
    #[arg(long)]
    pub objective: Option<String>,
    /// Per-frame mode counts, e.g. --ranks 1,1.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Frame-norm penalty coefficient.
    #[arg(long)]
    pub penalty: Option<f64>,
    /// Penalty form: squared or plain.
    #[arg(long)]
    pub penalty_form: Option<String>,
    #[arg(long)]
    pub singular_cutoff: Option<f64>,
    #[arg(long)]
    pub spectrum_cap: Option<usize>,

    /// steepest or lbfgs.
    #[arg(long)]
    pub method: Option<String>,
    /// Trial-step scoring: exact or svd-update.
    #[arg(long)]
    pub step: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub objective_tol: Option<f64>,
    /// L-BFGS history length.
    #[arg(long)]
    pub memory: Option<usize>,
    #[arg(long)]
    pub reproject_every: Option<usize>,
    #[arg(long)]
    pub divergence_patience: Option<usize>,
    #[arg(long)]
    pub eta0_scale: Option<f64>,
    /// Rank stage RANKS[@TRIGGER]; repeat for several stages. TRIGGER is an
    /// iteration count or sat:REL,WINDOW; the last stage needs none.
    /// Example: --stage 1,1@40 --stage 3,1@sat:1e-4,20 --stage 4,1
    #[arg(long = "stage")]
    pub stages: Option<Vec<String>>,

    /// Transport: exact or interpolated.
    #[arg(long)]
    pub shift_mode: Option<String>,
    /// Lagrange stencil width (interpolated mode).
    #[arg(long)]
    pub order: Option<usize>,
    /// Boundary reads on bounded grids: zero, replicate, or a number.
    #[arg(long)]
    pub edge: Option<String>,

    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Matrix format: csv or binary.
    #[arg(long)]
    pub format: Option<String>,
    /// Artifact groups: matrices, spectra, trace, report, all.
    #[arg(long, value_delimiter = ',')]
    pub emit: Option<Vec<String>>,
}

fn parse_stage(spec: &str) -> CmdResult<StageSection> {
    let (ranks, trigger) = match spec.split_once('@') {
        Some((r, t)) => (r, Some(t)),
        None => (spec, None),
    };
    let ranks: Vec<usize> = ranks
        .split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Fail::usage(format!("bad rank {x:?} in stage {spec:?}")))
        })
        .collect::<CmdResult<_>>()?;
    let mut stage = StageSection {
        ranks,
        iterations: None,
        saturation: None,
    };
    match trigger {
        None => {}
        Some(t) if t.starts_with("sat:") => {
            let body = &t[4..];
            let (rel, win) = body
                .split_once(',')
                .ok_or_else(|| Fail::usage(format!("bad trigger in {spec:?}; use sat:REL,WINDOW")))?;
            stage.saturation = Some(SaturationSection {
                rel_decrease: rel
                    .parse()
                    .map_err(|_| Fail::usage(format!("bad saturation level in {spec:?}")))?,
                window: win
                    .parse()
                    .map_err(|_| Fail::usage(format!("bad saturation window in {spec:?}")))?,
            });
        }
        Some(t) => {
            stage.iterations = Some(
                t.parse()
                    .map_err(|_| Fail::usage(format!("bad trigger in {spec:?}")))?,
            );
        }
    }
    Ok(stage)
}

impl DecomposeArgs {
    /// The flags as a configuration layer.
    fn as_config(&self) -> CmdResult<RunConfig> {
        let mut cfg = RunConfig::default();
        cfg.input.file = self.input.clone();
        cfg.input.generator = self.generator.clone();
        cfg.input.m = self.m;
        cfg.input.n = self.n;
        cfg.input.mu = self.mu;
        cfg.input.d = self.d;
        cfg.input.dx = self.dx;
        cfg.input.dt = self.dt;
        cfg.input.bounded = if self.bounded { Some(true) } else { None };
        cfg.paths.file = self.paths_file.clone();
        cfg.paths.velocities = self.velocities.clone();
        cfg.paths.detect = self.detect.clone();
        cfg.paths.detect_rows = self.detect_rows.clone();
        cfg.objective.kind = self.objective.clone();
        cfg.objective.ranks = self.ranks.clone();
        cfg.objective.penalty = self.penalty;
        cfg.objective.penalty_form = self.penalty_form.clone();
        cfg.objective.singular_cutoff = self.singular_cutoff;
        cfg.objective.spectrum_cap = self.spectrum_cap;
        cfg.optimizer = OptimizerSection {
            method: self.method.clone(),
            step: self.step.clone(),
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            objective_tol: self.objective_tol,
            memory: self.memory,
            reproject_every: self.reproject_every,
            divergence_patience: self.divergence_patience,
            eta0_scale: self.eta0_scale,
            stages: match &self.stages {
                None => None,
                Some(specs) => Some(
                    specs
                        .iter()
                        .map(|s| parse_stage(s))
                        .collect::<CmdResult<_>>()?,
                ),
            },
        };
        cfg.shift.mode = self.shift_mode.clone();
        cfg.shift.order = self.order;
        cfg.shift.edge = self.edge.clone();
        cfg.output.dir = self.out.clone();
        cfg.output.format = self.format.clone();
        cfg.output.emit = self.emit.clone();
        Ok(cfg)
    }
}

pub fn run(args: &DecomposeArgs) -> CmdResult<()> {
    let file_cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let r = resolve(file_cfg.merge(args.as_config()?))?;

    // Bounded domains grow the extension the paths need; periodic ones come
    // back unchanged under an all-ones mask.
    let (data, weights) = decomp::extend_domain(&r.data, &r.paths, &r.shift)?;
    let problem = Problem {
        data,
        paths: r.paths.clone(),
        ranks: r.ranks.clone(),
        weights,
        shift: r.shift.clone(),
        objective: r.objective.clone(),
    };

    let t0 = Instant::now();
    let outcome = optimize::run(&problem, &r.optimizer, None)?;
    let wall = t0.elapsed().as_secs_f64();

    std::fs::create_dir_all(&r.out_dir)
        .map_err(|e| Fail::data(format!("creating {}: {e}", r.out_dir.display())))?;

    let record = toml::to_string_pretty(&r.record).expect("run config serializes");
    std::fs::write(r.out_dir.join("resolved.toml"), record)
        .map_err(|e| Fail::data(format!("writing resolved.toml: {e}")))?;

    let summary = analyze::report(&outcome.decomposition, &r.data, &problem.weights, &r.shift)?;
    let ext = r.format.extension();

    if r.emit.matrices {
        let grid = outcome.decomposition.grid();
        for (k, f) in outcome.decomposition.frames.iter().enumerate() {
            files::write_matrix(
                &r.out_dir.join(format!("frame_{k}.{ext}")),
                &f.values,
                Some(grid),
                r.format,
            )?;
        }
        for (k, lab) in summary.lab_views.iter().enumerate() {
            files::write_matrix(
                &r.out_dir.join(format!("frame_{k}_lab.{ext}")),
                lab,
                Some(&r.data.grid),
                r.format,
            )?;
        }
        let mut recon = summary.lab_views[0].clone();
        for lab in &summary.lab_views[1..] {
            recon += lab;
        }
        files::write_matrix(
            &r.out_dir.join(format!("reconstruction.{ext}")),
            &recon,
            Some(&r.data.grid),
            r.format,
        )?;
        files::write_paths(&r.out_dir.join("paths.csv"), &r.paths)?;
    }

    if r.emit.spectra {
        let mut out = String::new();
        for s in &summary.spectra {
            let line: Vec<String> = s.iter().map(|x| format!("{x:.16e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        std::fs::write(r.out_dir.join("spectra.csv"), out)
            .map_err(|e| Fail::data(format!("writing spectra.csv: {e}")))?;
    }

    if r.emit.trace {
        files::write_trace(&r.out_dir.join("trace.jsonl"), &outcome.trace)?;
    }

    if r.emit.report {
        let report = serde_json::json!({
            "stop": format!("{:?}", outcome.stop),
            "iterations": outcome.iterations,
            "svd_evals": outcome.svd_evals,
            "wall_secs": wall,
            "rel_error": summary.rel_error,
            "constraint_violation": summary.constraint_violation,
            "frame_norms": summary.frame_norms,
            "spectra": summary.spectra,
            "ranks": r.ranks,
            "pod_rank": summary.pod_rank,
            "pod_rel_error": summary.pod_rel_error,
        });
        std::fs::write(
            r.out_dir.join("report.json"),
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )
        .map_err(|e| Fail::data(format!("writing report.json: {e}")))?;
    }

    println!(
        "{:?} after {} iterations, {} factorizations, {:.2}s: rel error {:.3e}, pod at rank {} {:.3e}",
        outcome.stop,
        outcome.iterations,
        outcome.svd_evals,
        wall,
        summary.rel_error,
        summary.pod_rank,
        summary.pod_rel_error,
    );

    match outcome.stop {
        StopReason::MaxIters => Err(Fail::NoConvergence(format!(
            "iteration budget {} exhausted at rel error {:.3e}; artifacts in {}",
            r.optimizer.max_iters,
            summary.rel_error,
            r.out_dir.display()
        ))),
        StopReason::Diverged => Err(Fail::Divergence(format!(
            "objective kept increasing; artifacts in {}",
            r.out_dir.display()
        ))),
        _ => Ok(()),
    }
}
