//! `spod generate`: write an analytic case to disk.

use std::path::PathBuf;

use clap::Args;

use crate::config::{build_case, InputSection};
use crate::fail::CmdResult;
use crate::files::{self, MatrixFormat};

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Case name: two-wave, diffusive, leaving, reflected, identity, fronts.
    pub case: String,
    /// Spatial points.
    #[arg(long)]
    pub m: Option<usize>,
    /// Snapshots.
    #[arg(long)]
    pub n: Option<usize>,
    /// Diffusion constant (diffusive case).
    #[arg(long)]
    pub mu: Option<f64>,
    /// Matrix size (identity case).
    #[arg(long)]
    pub d: Option<usize>,
    /// Output directory.
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
    /// Matrix format: csv or binary.
    #[arg(long, default_value = "csv")]
    pub format: String,
}

pub fn run(args: &GenerateArgs) -> CmdResult<()> {
    let format: MatrixFormat = args.format.parse()?;
    let input = InputSection {
        generator: Some(args.case.clone()),
        m: args.m,
        n: args.n,
        mu: args.mu,
        d: args.d,
        ..InputSection::default()
    };
    let case = build_case(&input)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| crate::fail::Fail::data(format!("creating {}: {e}", args.out.display())))?;
    let ext = format.extension();
    let grid = &case.data.grid;

    let q = args.out.join(format!("q.{ext}"));
    files::write_matrix(&q, &case.data.values, Some(grid), format)?;
    files::write_paths(&args.out.join("paths.csv"), &case.paths)?;
    for (k, c) in case.components.iter().enumerate() {
        files::write_matrix(&args.out.join(format!("truth_{k}.{ext}")), c, Some(grid), format)?;
    }

    let about = serde_json::json!({
        "case": args.case,
        "m": grid.m,
        "n": grid.n,
        "periodic": grid.periodic,
        "ranks": case.ranks,
        "files": {
            "data": format!("q.{ext}"),
            "paths": "paths.csv",
            "truth": (0..case.components.len())
                .map(|k| format!("truth_{k}.{ext}"))
                .collect::<Vec<_>>(),
        },
    });
    std::fs::write(
        args.out.join("case.json"),
        serde_json::to_string_pretty(&about).expect("case summary serializes"),
    )
    .map_err(|e| crate::fail::Fail::data(format!("writing case.json: {e}")))?;

    println!(
        "wrote {} ({}x{}), {} truth frame(s), paths.csv to {}",
        q.display(),
        grid.m,
        grid.n,
        case.components.len(),
        args.out.display()
    );
    Ok(())
}
