//! Command-line driver: single experiment runs, the resolution convergence
//! study, and the built-in invariant check suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pnp::config::ExperimentConfig;
use pnp::harness::{convergence_study, run_experiment_with};

#[derive(Parser)]
#[command(name = "pnp", version, about = "Positivity-preserving, energy-stable electrodiffusion solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment described by a config file.
    Run {
        /// Flat `key = value` config file (`#` comments allowed).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the mesh resolution (cells per unit length).
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Run the refinement study over a list of resolutions.
    Converge {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Comma-separated resolutions, finest last.
        #[arg(long, value_delimiter = ',', default_value = "20,40,60,80,100")]
        resolutions: Vec<usize>,
    },
    /// Run the built-in invariant suite on small grids.
    Check,
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, String> {
    match path {
        Some(p) => ExperimentConfig::from_file(p).map_err(|e| format!("{}: {e}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run {
            config,
            output_dir,
            resolution,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            if let Some(r) = resolution {
                cfg.resolution = r;
            }
            let steps = cfg.num_steps();
            let stride = (steps / 10).max(1);
            println!(
                "run: {} cells/axis, dt = {:.6e}, {} steps, output {}",
                cfg.cells_per_axis(),
                cfg.effective_dt(),
                steps,
                cfg.output_dir.display()
            );
            let art = run_experiment_with(&cfg, |rec| {
                if rec.step % stride == 0 || rec.step == steps {
                    println!(
                        "  step {:6}  t = {:.4}  E = {:+.8e}  C_min = {:.3e}  iters = {}",
                        rec.step, rec.time, rec.energy, rec.c_min, rec.picard_iters
                    );
                }
            })
            .map_err(|e| e.to_string())?;
            let last = art.diagnostics.last().expect("at least the initial record");
            println!(
                "done: E = {:+.8e}, C_min = {:.3e}, mass_n = {:.12e}, mass_p = {:.12e}",
                last.energy, last.c_min, last.mass_n, last.mass_p
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Converge {
            config,
            output_dir,
            resolutions,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            println!(
                "convergence study at resolutions {:?}, output {}",
                resolutions,
                cfg.output_dir.display()
            );
            let study = convergence_study(&cfg, &resolutions).map_err(|e| e.to_string())?;
            println!("pair  h_coarse   h_fine     diff_n       diff_p       diff_phi");
            for (i, p) in study.pairs.iter().enumerate() {
                println!(
                    "{:4}  {:9.6}  {:9.6}  {:.5e}  {:.5e}  {:.5e}",
                    i + 1,
                    p.h_coarse,
                    p.h_fine,
                    p.diff_n,
                    p.diff_p,
                    p.diff_phi
                );
            }
            println!("triple  A*        order_n  order_p  order_phi");
            for (i, o) in study.orders.iter().enumerate() {
                println!(
                    "{:6}  {:8.5}  {:7.3}  {:7.3}  {:9.3}",
                    i + 1,
                    o.astar,
                    o.order_n,
                    o.order_p,
                    o.order_phi
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check => {
            let outcome = pnp::selftest::run_checks();
            println!("{} passed, {} failed", outcome.passed, outcome.failed);
            Ok(if outcome.failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
