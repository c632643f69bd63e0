//! Configuration-driven front end for the slab transport solver.
//!
//! `solve` runs one problem and writes the field as JSON; `study` runs a
//! refinement hierarchy per epsilon and writes the error/rate CSV;
//! `sweep-lambda` scans boundary blend weights per level; `verify` runs the
//! numerical self-checks. Exit codes: 0 success, 1 invalid configuration or
//! usage, 2 solver non-convergence, 3 verification failure.

mod config;
mod expr;
mod report;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use slab_transport::analysis::{convergence_study, lambda_sweep, BlendPolicy};
use slab_transport::boundary::{blended_boundary, compute_h_function, lambda_star};
use slab_transport::solve;

use config::{BlendSpec, Config};
use report::{ReportRow, SolveDocument};

#[derive(Parser)]
#[command(
    name = "slab-transport",
    about = "Discrete-ordinate transport in 1-D slabs: solves, convergence studies, and blend sweeps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the first configured (epsilon, level) pair and write the field.
    Solve(RunArgs),
    /// Run the refinement hierarchy per epsilon and write the error table.
    Study(RunArgs),
    /// Scan boundary blend weights on each configured level.
    SweepLambda(RunArgs),
    /// Run the numerical self-checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment definition (TOML, or JSON for a .json path).
    #[arg(long)]
    config: PathBuf,
    /// Override the output path from the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads for independent solves; 0 or absent means all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Also write the report to this file.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed for the randomized property checks.
    #[arg(long, default_value_t = 0x5eed)]
    seed: u64,
    /// Grid size for the boundary-layer weight table check.
    #[arg(long, default_value_t = 64)]
    h_nodes: usize,
    /// Acceptance tolerance for the weight-table moment checks; tightening
    /// it past the resolution of --h-nodes makes the check fail.
    #[arg(long, default_value_t = 1e-6)]
    h_tolerance: f64,
    /// Test hook: perturb one angular weight by 1e-3 to demonstrate that the
    /// exactness check trips.
    #[arg(long, hide = true)]
    perturb_quadrature: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl From<slab_transport::Error> for CliError {
    fn from(e: slab_transport::Error) -> Self {
        match e {
            slab_transport::Error::NonConvergence(_) | slab_transport::Error::Breakdown(_) => {
                CliError::Solver(e.to_string())
            }
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Invalid(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version go to stdout with success; usage errors are
            // validation failures
            let code = if e.use_stderr() { 1u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => with_config(args, run_solve),
        Command::Study(args) => with_config(args, run_study),
        Command::SweepLambda(args) => with_config(args, run_sweep),
        Command::Verify(args) => run_verify(args),
    }
}

fn with_config(
    args: RunArgs,
    driver: fn(&Config, &Path, &rayon::ThreadPool) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let config = Config::from_path(&args.config)
        .and_then(Config::validated)
        .map_err(CliError::Invalid)?;
    let output = args
        .output
        .unwrap_or_else(|| PathBuf::from(&config.output.path));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Invalid(format!("cannot build thread pool: {e}")))?;
    driver(&config, &output, &pool)
}

fn run_solve(config: &Config, output: &Path, _pool: &rayon::ThreadPool) -> Result<(), CliError> {
    let epsilon = config.epsilon.values[0];
    let level = config.mesh.levels[0];
    let base = config.base_mesh()?;
    let mesh = base.refined_to(level)?;
    let quad = config.angular()?;
    let spec = config.problem_spec(epsilon).map_err(CliError::Invalid)?;
    let lambda = match config.blend_policy().map_err(CliError::Invalid)? {
        BlendPolicy::None => 1.0,
        BlendPolicy::Fixed(lambda) => lambda,
        BlendPolicy::LambdaStar { q } => lambda_star(epsilon, mesh.h(), q),
    };
    let run_spec = if lambda < 1.0 {
        let table = compute_h_function(config.solver.h_table_nodes, 1e-12)?;
        blended_boundary(&spec, &table, lambda)?
    } else {
        spec.clone()
    };
    let result = solve(
        &run_spec,
        &mesh,
        &quad,
        config.discretization.k,
        &config.solve_options(),
    )?;
    if !result.converged {
        return Err(CliError::Solver(format!(
            "solve on {} cells stalled after {} iterations (flux change {:.3e}, residual {:.3e})",
            mesh.ncells(),
            result.iterations,
            result.flux_change,
            result.final_residual
        )));
    }
    let document = SolveDocument {
        domain: [config.domain.a, config.domain.b],
        ncells: mesh.ncells(),
        h: mesh.h(),
        degree: config.discretization.k,
        epsilon,
        lambda,
        ordinates: quad.ordinates().to_vec(),
        weights: quad.weights().to_vec(),
        iterations: result.iterations,
        converged: result.converged,
        flux_change: result.flux_change,
        final_residual: result.final_residual,
        field: (0..quad.len())
            .map(|l| {
                (0..mesh.ncells())
                    .map(|c| result.field.cell_coeffs(l, c).to_vec())
                    .collect()
            })
            .collect(),
        scalar_flux: (0..mesh.ncells())
            .map(|c| result.flux.cell_coeffs(c).to_vec())
            .collect(),
    };
    report::write_json(output, &document)?;
    println!(
        "converged in {} iterations (certified residual {:.3e}); wrote {}",
        result.iterations,
        result.final_residual,
        output.display()
    );
    Ok(())
}

fn run_study(config: &Config, output: &Path, pool: &rayon::ThreadPool) -> Result<(), CliError> {
    let base = config.base_mesh()?;
    let quad = config.angular()?;
    let study = config.study_config().map_err(CliError::Invalid)?;
    let specs = config
        .epsilon
        .values
        .iter()
        .map(|&eps| config.problem_spec(eps))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::Invalid)?;
    let reports: Vec<slab_transport::Result<_>> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| convergence_study(spec, &base, &quad, &study))
            .collect()
    });
    let mut rows = Vec::new();
    for outcome in reports {
        let report = outcome?;
        let norm = report.norm.label();
        for row in report.rows {
            rows.push(ReportRow {
                level: row.level,
                h: row.h,
                epsilon: row.epsilon,
                degree: row.degree,
                lambda: row.lambda,
                norm,
                error: row.error,
                rate: row.rate,
            });
        }
    }
    report::write_csv(output, &rows)?;
    println!("wrote {} study rows to {}", rows.len(), output.display());
    Ok(())
}

/// The scanned weights when the config does not provide a grid: a uniform
/// 0.05 lattice plus the near-unblended points.
fn default_sweep_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.05).collect();
    grid.extend([0.99, 0.999, 1.0]);
    grid
}

fn run_sweep(config: &Config, output: &Path, pool: &rayon::ThreadPool) -> Result<(), CliError> {
    let base = config.base_mesh()?;
    let quad = config.angular()?;
    let q = config.blend_exponent();
    let grid_base = match &config.blend {
        BlendSpec::Sweep { grid, .. } => grid.clone(),
        _ => default_sweep_grid(),
    };
    let tasks: Vec<(f64, u32)> = config
        .epsilon
        .values
        .iter()
        .flat_map(|&eps| config.mesh.levels.iter().map(move |&level| (eps, level)))
        .collect();
    let outcomes: Vec<Result<_, CliError>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(eps, level)| {
                let spec = config.problem_spec(eps).map_err(CliError::Invalid)?;
                let h = base.refined_to(level)?.h();
                // the resolution-based weight joins the scan so its error is
                // always tabulated next to the scanned optimum
                let mut grid = grid_base.clone();
                let star = lambda_star(eps, h, q);
                if !grid.iter().any(|&l| (l - star).abs() <= 1e-12) {
                    grid.push(star);
                }
                grid.sort_by(f64::total_cmp);
                let sweep = lambda_sweep(
                    &spec,
                    &base,
                    &quad,
                    level,
                    config.mesh.reference_level,
                    config.discretization.k,
                    config.norm.kind(),
                    &grid,
                    q,
                    &config.solve_options(),
                    config.solver.h_table_nodes,
                )?;
                Ok((eps, level, h, sweep))
            })
            .collect()
    });
    let mut rows = Vec::new();
    for outcome in outcomes {
        let (eps, level, h, sweep) = outcome?;
        let best = &sweep.rows[sweep.best];
        println!(
            "eps {eps:.0e} level {level}: best lambda {:.3} with error {:.6e} (lambda* {:.6})",
            best.lambda, best.error, sweep.lambda_star
        );
        for row in sweep.rows {
            rows.push(ReportRow {
                level,
                h,
                epsilon: eps,
                degree: config.discretization.k,
                lambda: row.lambda,
                norm: config.norm.kind().label(),
                error: row.error,
                rate: None,
            });
        }
    }
    report::write_csv(output, &rows)?;
    println!("wrote {} sweep rows to {}", rows.len(), output.display());
    Ok(())
}

fn run_verify(args: VerifyArgs) -> Result<(), CliError> {
    let settings = verify::VerifySettings {
        seed: args.seed,
        h_nodes: args.h_nodes,
        h_tolerance: args.h_tolerance,
        perturb_quadrature: args.perturb_quadrature,
    };
    let (text, passed) = verify::run(&settings);
    print!("{text}");
    if let Some(path) = &args.output {
        std::fs::write(path, &text)?;
    }
    if passed {
        Ok(())
    } else {
        Err(CliError::Verification("verification failed".into()))
    }
}
