// Temporary probe for the Jacobi fallback on structured rank-deficient input.
use nalgebra::DMatrix;
use spod::lowrank;

fn instrumented_jacobi(a: &DMatrix<f64>) {
    let transposed = a.nrows() < a.ncols();
    let mut b = if transposed { a.transpose() } else { a.clone() };
    let n = b.ncols();

    for sweep in 0..70 {
        let mut rotated = 0usize;
        let mut worst = 0.0f64;
        let mut worst_pair = (0, 0);
        let mut worst_norms = (0.0, 0.0);
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let app = b.column(p).norm_squared();
                let aqq = b.column(q).norm_squared();
                let apq = b.column(p).dot(&b.column(q));
                let rel = if app * aqq > 0.0 {
                    apq.abs() / (app * aqq).sqrt()
                } else {
                    0.0
                };
                if rel > worst {
                    worst = rel;
                    worst_pair = (p, q);
                    worst_norms = (app.sqrt(), aqq.sqrt());
                }
                if apq.abs() <= 1e-15 * (app * aqq).sqrt() || (app == 0.0 && aqq == 0.0) {
                    continue;
                }
                rotated += 1;
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..b.nrows() {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    b[(i, p)] = c * bp - s * bq;
                    b[(i, q)] = s * bp + c * bq;
                }
            }
        }
        if sweep > 55 || sweep < 6 {
            println!(
                "  sweep {sweep:2}: rotations {rotated:2}, worst rel apq {worst:.3e} at {worst_pair:?} norms ({:.3e}, {:.3e})",
                worst_norms.0, worst_norms.1
            );
        }
        if rotated == 0 {
            println!("  converged after sweep {sweep}");
            return;
        }
    }
    println!("  NOT CONVERGED in 70 sweeps");
}

fn main() {
    let (m, n, seed) = (13usize, 8usize, 4868usize);
    let c0 = DMatrix::from_fn(m, n, |i, j| (((i + 3) * (j + 2) * (seed + 5)) % 33) as f64 - 16.0);
    let c1 = DMatrix::from_fn(m, n, |i, j| (((i + 1) * (j + 7) * (seed + 2)) % 35) as f64 - 17.0);

    for (name, c) in [("c0 (mod 33)", &c0), ("c1 (mod 35)", &c1)] {
        println!("{name}: {}x{}", c.nrows(), c.ncols());
        match lowrank::svd_truncated(c, 1) {
            Ok(t) => println!("  svd_truncated ok, s = {:?}", &t.triple.s.as_slice()[..3.min(t.triple.s.len())]),
            Err(e) => println!("  svd_truncated ERR: {e}"),
        }
        instrumented_jacobi(c);
    }
}
