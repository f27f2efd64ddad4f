use spod::decomp;
use spod::generate::{self, BoundaryKind};
use spod::objective::{ObjectiveConfig, ObjectiveKind, PenaltyForm};
use spod::optimize::{run, Method, OptimizerConfig, Problem};
use spod::shift::{EdgePolicy, ShiftConfig, ShiftMode};

fn boundary_problem(m: usize, n: usize, two_frames: bool, kind: ObjectiveKind, penalty: f64, form: PenaltyForm) -> Problem {
    let shift = ShiftConfig {
        mode: ShiftMode::Exact,
        edge: EdgePolicy::Constant(0.0),
        ..ShiftConfig::default()
    };
    let case = generate::boundary_case(BoundaryKind::Leaving, m, n).unwrap();
    let mut paths = case.paths.clone();
    let mut ranks = case.ranks.clone();
    if two_frames {
        paths.push(spod::field::FramePath::constant_velocity(-1.0, &case.data.grid));
        ranks.push(1);
    }
    let (data, weights) = decomp::extend_domain(&case.data, &paths, &shift).unwrap();
    Problem {
        weights,
        paths,
        ranks,
        shift,
        objective: ObjectiveConfig {
            kind,
            penalty,
            penalty_form: form,
            ..ObjectiveConfig::default()
        },
        data,
    }
}

fn spectrum_head(values: &nalgebra::DMatrix<f64>, k: usize) -> Vec<f64> {
    let svd = values.clone().svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().cloned().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s.truncate(k);
    s
}

fn reflected_problem(m: usize, n: usize) -> Problem {
    let shift = ShiftConfig {
        mode: ShiftMode::Exact,
        edge: EdgePolicy::Constant(0.0),
        ..ShiftConfig::default()
    };
    let case = generate::boundary_case(BoundaryKind::Reflected, m, n).unwrap();
    let (data, weights) = decomp::extend_domain(&case.data, &case.paths, &shift).unwrap();
    Problem {
        weights,
        paths: case.paths,
        ranks: case.ranks,
        shift,
        objective: ObjectiveConfig::default(),
        data,
    }
}

fn main() {
    for (m, n, mem) in [(61usize, 35usize, 25usize), (61, 37, 25), (51, 31, 25), (71, 41, 10), (57, 33, 25)] {
        let problem = reflected_problem(m, n);
        let cfg = OptimizerConfig {
            method: Method::Lbfgs,
            memory: mem,
            max_iters: 12_000,
            grad_tol: 1e-14,
            objective_tol: 0.0,
            ..OptimizerConfig::default()
        };
        let t0 = std::time::Instant::now();
        let out = run(&problem, &cfg, None).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let last = out.trace.records.last().unwrap();
        let hit = out
            .trace
            .records
            .iter()
            .find(|r| r.rel_error < 1e-5)
            .map(|r| r.iteration as isize)
            .unwrap_or(-1);
        let r0 = {
            let s = spectrum_head(&out.decomposition.frames[0].values, 2);
            s[1] / s[0]
        };
        let r1 = {
            let s = spectrum_head(&out.decomposition.frames[1].values, 2);
            s[1] / s[0]
        };
        println!(
            "reflected m {m:3} n {n:2} mem {mem:2}: it_to_1e-5 {hit:5} final err {:.2e} s2/s1 {:.1e} {:.1e} stop {:?} {secs:.1}s",
            last.rel_error, r0, r1, out.stop
        );
    }
}
