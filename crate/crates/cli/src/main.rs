use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use coupling_lab::geometry::{constant_a, shell_family};
use coupling_lab::harness::config::load_toml;
use coupling_lab::harness::verify::{run_acceptance, AcceptanceOptions};
use coupling_lab::harness::{
    analyze, refit_csv, run_sweep, simulate, CaseConfig, SweepConfig, CSV_HEADER,
};

#[derive(Parser)]
#[command(name = "coupling-lab", version, about = "Large-coupling heat semigroup laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the constant a, reaches, gaps and the shell table.
    Geometry {
        #[command(flatten)]
        case: CaseArgs,
        /// Number of shells in the table (default floor(lambda^nu)).
        #[arg(long)]
        shells: Option<usize>,
    },
    /// Run a single case and optionally dump its snapshots.
    Solve {
        #[command(flatten)]
        case: CaseArgs,
        /// Directory for snapshots, the step index and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a lambda sweep and fit the decay of sup_t |u|^2_{L2(V)}.
    Sweep {
        #[command(flatten)]
        case: CaseArgs,
        /// Comma-separated lambda grid.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long)]
        threads: Option<usize>,
        /// CSV output (stdout when absent).
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json_dir: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Verify {
        /// Scratch directory for the determinism check.
        #[arg(long)]
        scratch: Option<PathBuf>,
    },
    /// Refit an existing sweep CSV.
    Fit {
        csv: PathBuf,
        #[arg(long)]
        nu: Option<f64>,
    },
}

/// Flags shared by the case-level subcommands; each overrides the
/// corresponding config key.
#[derive(Args, Debug, Default)]
struct CaseArgs {
    /// TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_exponent: Option<f64>,
    #[arg(long)]
    mv_gamma: Option<f64>,
    #[arg(long)]
    mv_start: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    ramp_width: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    cg_rel_tol: Option<f64>,
    #[arg(long)]
    cg_max_iter: Option<usize>,
    #[arg(long)]
    jacobi: Option<bool>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    dense_until: Option<f64>,
}

impl CaseArgs {
    fn apply(&self, c: &mut CaseConfig) {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        set!(
            dim => dim,
            cells => cells,
            lambda => lambda,
            t_end => t_end,
            nu => nu,
            gamma => gamma,
            mv_gamma => mv_gamma,
            amplitude => initial.amplitude,
            ramp_width => initial.ramp_width,
            theta => solver.theta,
            cg_rel_tol => solver.cg_rel_tol,
            cg_max_iter => solver.cg_max_iter,
            jacobi => solver.jacobi,
        );
        if self.n_exponent.is_some() {
            c.n_exponent = self.n_exponent;
        }
        if self.mv_start.is_some() {
            c.mv_start = self.mv_start;
        }
        if self.dt.is_some() {
            c.solver.dt = self.dt;
        }
        if self.stride.is_some() {
            c.solver.stride = self.stride;
        }
        if self.dense_until.is_some() {
            c.solver.dense_until = self.dense_until;
        }
        if self.dim.is_some() && c.domain.as_ref().is_some_and(|d| d.dim() != c.dim) {
            c.domain = None;
        }
    }

    fn case(&self) -> Result<CaseConfig> {
        let mut c = match &self.config {
            Some(p) => load_toml(p)?,
            None => CaseConfig::default(),
        };
        self.apply(&mut c);
        Ok(c)
    }

    fn sweep(&self) -> Result<SweepConfig> {
        let mut s = match &self.config {
            Some(p) => load_toml(p)?,
            None => SweepConfig::default(),
        };
        self.apply(&mut s.case);
        Ok(s)
    }
}

fn geometry(case: &CaseArgs, shells: Option<usize>) -> Result<()> {
    let cfg = case.case()?;
    cfg.validate()?;
    let domain = cfg.domain();
    let grid = cfg.grid()?;
    let gaps = domain.validate(&grid)?;
    let a = constant_a(&domain, &grid)?;
    println!("dim                    {}", grid.dim);
    println!("cells                  {:?}", &grid.cells[..grid.dim]);
    println!("h                      {:.6e}", grid.max_spacing());
    println!("gap(obstacle, box)     {:.6e}", gaps.obstacle_to_boundary);
    println!("gap(V, obstacle)       {:.6e}", gaps.subdomain_to_obstacle);
    println!("reach inward           {:.6e}", domain.subdomain.reach_inward);
    println!("reach outward          {:.6e}", domain.subdomain.reach_outward);
    println!("a                      {:.6e}", a);
    let n = shells.unwrap_or_else(|| {
        coupling_lab::bounds::iteration_count(cfg.lambda.max(1.0), cfg.n_exponent())
    });
    let family = shell_family(&domain, cfg.gamma, n, &grid)?;
    println!();
    println!("{:>4} {:>12} {:>10} {:>14}", "j", "offset", "cells", "measure");
    for (j, s) in family.iter().enumerate() {
        let offset = s.offset.map_or("obstacle".to_string(), |o| format!("{o:.6e}"));
        println!("{j:>4} {offset:>12} {:>10} {:>14.6e}", s.mask.count(), s.mask.measure);
    }
    Ok(())
}

fn solve(case: &CaseArgs, out: Option<PathBuf>) -> Result<()> {
    let cfg = case.case()?;
    let sim = simulate(&cfg).with_context(|| format!("lambda = {:e}", cfg.lambda))?;
    let report = analyze(&sim)?;
    if let Some(dir) = out {
        sim.store.write_to_dir(&dir)?;
        std::fs::write(dir.join("report.json"), report.to_json()?)?;
        info!("wrote {}", dir.display());
    }
    println!("{CSV_HEADER}");
    println!("{}", report.csv_row());
    Ok(())
}

fn sweep(
    case: &CaseArgs,
    lambdas: Option<Vec<f64>>,
    threads: Option<usize>,
    csv: Option<PathBuf>,
    json_dir: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = case.sweep()?;
    if let Some(l) = lambdas {
        cfg.lambdas = l;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    if csv.is_some() {
        cfg.output.csv = csv;
    }
    if json_dir.is_some() {
        cfg.output.json_dir = json_dir;
    }
    let report = run_sweep(&cfg)?;
    if cfg.output.csv.is_none() {
        print!("{}", report.csv());
    }
    eprint!("{}", report.summary());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Geometry { case, shells } => geometry(&case, shells),
        Command::Solve { case, out } => solve(&case, out),
        Command::Sweep {
            case,
            lambdas,
            threads,
            csv,
            json_dir,
        } => sweep(&case, lambdas, threads, csv, json_dir),
        Command::Verify { scratch } => {
            let outcomes = run_acceptance(&AcceptanceOptions {
                scratch,
                ..Default::default()
            });
            return if outcomes.iter().all(|o| o.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            };
        }
        Command::Fit { csv, nu } => refit_csv(&csv, nu)
            .map(|fit| {
                for f in &fit.fits {
                    println!(
                        "{:<16} c = {:+.6e}  b = {:+.6e}  R^2 = {:.6}  points = {}{}",
                        f.model.name(),
                        f.c,
                        f.b,
                        f.r2,
                        f.points_used,
                        if f.no_decay { "  (no decay)" } else { "" }
                    );
                }
                for (mid, s) in &fit.local_slopes {
                    println!("slope at log10(lambda) = {mid:.3}: {s:+.4}");
                }
                println!("best: {}", fit.best);
            })
            .map_err(Into::into),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
