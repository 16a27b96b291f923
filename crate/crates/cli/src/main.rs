use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nodal_cli::artifacts::{self, EigenSummary, TorsionSummary};
use nodal_cli::pipeline::{self, Context};
use nodal_cli::{CliError, RunConfig};
use nodal_core::spectral::{EigenPair, TorsionField};

/// Sign-changing solutions of a singular two-component elliptic system on a
/// rectangle: calibration of sub/supersolutions and the `ε -> 0` limit.
#[derive(Parser)]
#[command(name = "nodal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// All stages: eigen, torsion, verify and continue.
    Run(Common),
    /// Principal eigenpair -> eigen.json, eigen.csv.
    Eigen(Common),
    /// Torsion function on the padded rectangle -> torsion.json, torsion.csv.
    Torsion(Common),
    /// Hypothesis checks and calibration -> calibration.json.
    Verify(Common),
    /// One fixed-eps solve -> solve.json, solve_fields.csv.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Defaults to the first eps of the schedule.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// The eps schedule -> fields.csv, report.json, snapshots.
    Continue(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to `output.directory`, then `./out`.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Leave wall-clock timings out of the reports.
    #[arg(long)]
    no_timings: bool,
}

impl Common {
    fn context(&self) -> Result<Context, CliError> {
        let cfg = RunConfig::load(&self.config)?;
        let out = self
            .out_dir
            .clone()
            .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Context::new(cfg, out, !self.no_timings)
    }
}

type Upstream = ((EigenSummary, EigenPair), (TorsionSummary, TorsionField));

fn upstream(ctx: &Context) -> Result<Upstream, CliError> {
    let e = artifacts::load_eigen(&ctx.out, &ctx.grid, ctx.cfg.spectral.normalization)?;
    let t = artifacts::load_torsion(&ctx.out, &ctx.grid, ctx.cfg.domain.pad_cells)?;
    Ok((e, t))
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Eigen(c) => pipeline::eigen(&mut c.context()?).map(drop),
        Command::Torsion(c) => pipeline::torsion(&mut c.context()?).map(drop),
        Command::Verify(c) => {
            let mut ctx = c.context()?;
            let ((_, e), (_, t)) = upstream(&ctx)?;
            pipeline::verify(&mut ctx, &e, &t).map(drop)
        }
        Command::Solve { common, eps } => {
            let mut ctx = common.context()?;
            let ((_, e), (_, t)) = upstream(&ctx)?;
            let (data, art) = pipeline::load_calibrated(&ctx, &e, &t)?;
            let eps = match eps {
                Some(x) => x,
                None => ctx.cfg.schedule()?.eps[0],
            };
            pipeline::solve(&mut ctx, &data, &t, &art.calibration, eps).map(drop)
        }
        Command::Continue(c) => {
            let mut ctx = c.context()?;
            let ((es, e), (ts, t)) = upstream(&ctx)?;
            let (data, art) = pipeline::load_calibrated(&ctx, &e, &t)?;
            pipeline::continue_run(&mut ctx, &data, &t, (es, ts), art).map(drop)
        }
        Command::Run(c) => {
            let mut ctx = c.context()?;
            let (es, e) = pipeline::eigen(&mut ctx)?;
            let (ts, t) = pipeline::torsion(&mut ctx)?;
            let (data, art) = pipeline::verify(&mut ctx, &e, &t)?;
            pipeline::continue_run(&mut ctx, &data, &t, (es, ts), art).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
