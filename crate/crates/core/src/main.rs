use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mdflow::cli::{parse_config, run, suite_status, Status, Suite};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteName {
    Acceptance,
    Invariants,
}

/// Incompressible flow in a moving material disk.
#[derive(Debug, Parser)]
#[command(name = "mdflow", version)]
struct Args {
    /// Run configuration file.
    #[arg(long, value_name = "PATH", conflicts_with = "suite", required_unless_present = "suite")]
    config: Option<PathBuf>,
    /// Run a built-in scenario suite instead of a single configuration.
    #[arg(long, value_enum)]
    suite: Option<SuiteName>,
    /// Output directory; overrides `output.dir` of the configuration.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print only failures and the final verdict.
    #[arg(long)]
    quiet: bool,
}

fn exit(s: Status) -> ExitCode {
    ExitCode::from(s.code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit(Status::ConfigError) } else { ExitCode::SUCCESS };
        }
    };
    match (args.config, args.suite) {
        (Some(path), _) => run_config(&path, args.out, args.quiet),
        (None, Some(s)) => run_suite(s, args.out.unwrap_or_else(|| PathBuf::from("out")), args.quiet),
        (None, None) => exit(Status::ConfigError),
    }
}

fn run_config(path: &PathBuf, out: Option<PathBuf>, quiet: bool) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return exit(Status::ConfigError);
        }
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errs) => {
            for e in errs {
                eprintln!("{}: {e}", path.display());
            }
            return exit(Status::ConfigError);
        }
    };
    let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
    if !quiet {
        let kind = if cfg.is_family() { "family" } else { "run" };
        println!(
            "{kind} {}: {} on {}x{}, nu = {:?}, T = {}, dt = {}",
            cfg.id, cfg.motion_text, cfg.n_r, cfg.n_theta, cfg.nus, cfg.horizon, cfg.step.dt
        );
    }
    let outcome = match run(&cfg, &dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("scenario {}: {e}", cfg.id);
            return exit(match e {
                mdflow::FlowError::Io(_) => Status::NumericalFailure,
                _ => Status::ConfigError,
            });
        }
    };
    for c in &outcome.checks {
        if !quiet || !c.passed {
            println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    if !quiet {
        println!("wrote {} files to {}", outcome.files.len(), dir.display());
    }
    println!("{}: exit {}", cfg.id, outcome.status.code());
    exit(outcome.status)
}

fn run_suite(which: SuiteName, out: PathBuf, quiet: bool) -> ExitCode {
    let suite = match which {
        SuiteName::Acceptance => Suite::new(&out),
        SuiteName::Invariants => Suite::quick(&out),
    };
    let results = match which {
        SuiteName::Acceptance => suite.acceptance(),
        SuiteName::Invariants => suite.invariants(),
    };
    for c in &results {
        if !quiet || !c.passed {
            println!("{c}");
        }
    }
    let status = suite_status(&results);
    let passed = results.iter().filter(|c| c.passed).count();
    println!("{passed}/{} criteria passed; exit {}", results.len(), status.code());
    exit(status)
}
