use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inert_sim::pipeline::{self, RunOptions};
use inert_sim::{RunConfig, SimError};

#[derive(Parser)]
#[command(name = "inert-sim", version, about = "Reflecting diffusions with inert drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, test and write outputs for a config.
    Run {
        config: PathBuf,
        /// Write the manifest only.
        #[arg(long)]
        dry_run: bool,
        /// Treat inconclusive tests as failures.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the Skorokhod problem for a path file `t,x1,...,xd`.
    Skorokhod {
        /// Config supplying the domain.
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Generator residuals of the bump basis by quadrature.
    Residual {
        config: PathBuf,
        /// Scale the potential of the measure by this factor.
        #[arg(long)]
        perturb: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Weak-convergence sweep over potential indices.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        n: Vec<u32>,
        #[arg(long, default_value_t = 0.0)]
        margin: f64,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histograms of a trajectory file with the stationary density overlaid.
    Histogram {
        config: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<i32, SimError> {
    match cli.command {
        Command::Run { config, dry_run, strict, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = cfg.output_dir(out.as_deref());
            let o = pipeline::run(&cfg, &dir, RunOptions { dry_run, strict })?;
            for r in &o.reports {
                println!("{:<18} {:<12} statistic {:.6e} threshold {:.6e}  {}", r.name, r.verdict.as_str(), r.statistic, r.threshold, r.notes);
            }
            println!("outputs in {}", dir.display());
            Ok(o.exit_code)
        }
        Command::Skorokhod { config, input, output } => {
            let cfg = RunConfig::load(&config)?;
            pipeline::skorokhod(&cfg, &input, &output)?;
            Ok(0)
        }
        Command::Residual { config, perturb, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = cfg.output_dir(out.as_deref());
            let o = pipeline::residual(&cfg, &dir, perturb)?;
            let r = &o.reports[0];
            println!("residual {} max |residual| {:.3e} tolerance {:.1e}", r.verdict.as_str(), r.statistic, r.threshold);
            Ok(o.exit_code)
        }
        Command::Sweep { config, n, margin, strict, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = cfg.output_dir(out.as_deref());
            let o = pipeline::sweep(&cfg, &dir, &n, margin, strict)?;
            let r = &o.reports[0];
            println!("weak_convergence {}  {}", r.verdict.as_str(), r.notes);
            Ok(o.exit_code)
        }
        Command::Histogram { config, trajectories, bins, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = cfg.output_dir(out.as_deref());
            for f in pipeline::histogram(&cfg, &trajectories, bins, &dir)? {
                println!("{}", f.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
