use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spherical_ot::pipeline::{self, Command};

#[derive(Parser)]
#[command(name = "spherical-ot", version, about = "Optimal transport on products of spheres, with regularity diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample the cost conditions only.
    CheckConditions(Args),
    /// Check conditions and solve the semi-discrete problem.
    Solve(Args),
    /// Check conditions and run the selected diagnostics.
    Diagnose(Args),
    /// Every stage.
    All(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML experiment file.
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::CheckConditions(a) => (Command::CheckConditions, a),
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Diagnose(a) => (Command::Diagnose, a),
        Cmd::All(a) => (Command::All, a),
    };
    let outcome = pipeline::run(&args.config, command, args.seed, args.out);
    match &outcome {
        Ok(r) => {
            if let Some(c) = &r.conditions {
                for rep in &c.reports {
                    println!("{:<5} {:<28} worst {:+.3e} (tol {:.0e})", verdict(rep.pass), rep.condition, rep.worst, rep.tolerance);
                }
            }
            if let Some(s) = &r.solve {
                println!(
                    "{:<5} solve: {} atoms, max residual {:.3e}, {} iterations{}",
                    verdict(s.converged),
                    s.atoms,
                    s.max_residual,
                    s.iterations,
                    if s.stalled { " (stalled)" } else { "" }
                );
            }
            for d in &r.diagnostics {
                let tag = match d.status {
                    pipeline::Status::Pass => "PASS",
                    pipeline::Status::Fail => "FAIL",
                    pipeline::Status::Skipped => "SKIP",
                };
                match &d.reason {
                    Some(why) => println!("{tag:<5} {}: {why}", d.name),
                    None => println!("{tag:<5} {}", d.name),
                }
            }
            if r.conditions_overridden {
                println!("note: diagnostics ran despite failed conditions (override_conditions = true)");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(pipeline::exit_code(&outcome) as u8)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
