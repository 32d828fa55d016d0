//! Command-line front end: benchmark runs, the GCL check, mesh validation.

use ale_rd::{driver, Error, RunConfig64};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "alerd", about = "Adaptive ALE residual-distribution Euler solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in case by name, or a configuration file by path.
    Run {
        /// Case name (gcl, gcl-deform, vortex, shock-reflection, rae2822,
        /// ffs, naca-pitch) or path to a config file.
        case_or_config: String,
        /// Spatial order of the scheme (1 or 2).
        #[arg(long)]
        order: Option<usize>,
        /// Minimal target edge length for adaptation.
        #[arg(long)]
        h_min: Option<f64>,
        /// Adaptation interval in steps (0 disables adaptation).
        #[arg(long)]
        adapt_every: Option<usize>,
        /// Number of physical steps (or steady cycles).
        #[arg(long)]
        steps: Option<usize>,
        /// Output directory for VTK snapshots and the CSV log.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the residual assembly.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the uniform-flow benchmark of a config and print the maximum
    /// nodal pressure error.
    CheckGcl { config: String },
    /// Read a Gmsh mesh and print its validation report.
    ValidateMesh { file: PathBuf },
}

fn load_config(source: &str) -> Result<RunConfig64, Error> {
    let path = std::path::Path::new(source);
    if path.exists() && path.is_file() {
        RunConfig64::from_file(path)
    } else {
        RunConfig64::from_case_name(source)
    }
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Config(_) | Error::Parse { .. } | Error::UnknownBoundaryTag { .. } => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch() -> Result<ExitCode, Error> {
    match Cli::parse().command {
        Command::Run {
            case_or_config,
            order,
            h_min,
            adapt_every,
            steps,
            out,
            threads,
        } => {
            let mut config = load_config(&case_or_config)?;
            if let Some(order) = order {
                config.set("scheme.order", &order.to_string())?;
            }
            if let Some(h_min) = h_min {
                config.set("adapt.h_min", &h_min.to_string())?;
            }
            if let Some(every) = adapt_every {
                config.set("adapt.every", &every.to_string())?;
            }
            if let Some(steps) = steps {
                config.set("time.steps", &steps.to_string())?;
            }
            if let Some(out) = out {
                config.out_dir = Some(out);
            }
            if let Some(threads) = threads {
                config.set("run.threads", &threads.to_string())?;
            }
            let summary = driver::run(&config)?;
            println!(
                "{}: {} steps completed, final residual {:.3e}",
                config.case.name(),
                summary.steps_completed,
                summary.final_value("residual").unwrap_or(f64::NAN),
            );
            for column in config.case.log_columns() {
                if let Some(v) = summary.final_value(column) {
                    println!("  {column} = {v:.6e}");
                }
            }
            if let Some(dir) = &summary.out_dir {
                println!("  outputs in {}", dir.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckGcl { config } => {
            let config = load_config(&config)?;
            let max_err = driver::check_gcl(&config)?;
            println!("max nodal pressure error: {max_err:.6e}");
            Ok(if max_err <= 1e-12 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::ValidateMesh { file } => {
            let report = driver::validate_mesh_file::<f64>(&file)?;
            print!("{report}");
            Ok(if report.is_clean() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}
