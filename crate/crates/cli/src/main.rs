use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use fieldroad_cli::{
    exit_code, run_eigen, run_field_only, run_grow, run_solve, run_validate, to_pretty_json, ChecksFailed, RoadInput, RunConfig,
};

/// Steady states of the field-road model.
///
/// Exit codes: 0 success, 1 failed checks or I/O error, 2 bad configuration
/// or failed assumption checks, 3 solver non-convergence. Set
/// FIELDROAD_THREADS=1 to keep every run on one thread.
#[derive(Parser)]
#[command(name = "fieldroad", version)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled system; writes u.csv, v.csv and summary.json.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides output.dir in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Solve the two-road system regardless of the config mode.
        #[arg(long)]
        two_road: bool,
    },
    /// Minimal and maximal field solutions for a fixed road density.
    FieldOnly {
        #[arg(long)]
        config: PathBuf,
        /// Road density as an `x1,value` CSV on the config grid.
        #[arg(long, conflicts_with = "w_const")]
        w: Option<PathBuf>,
        /// Constant road density (defaults to m).
        #[arg(long)]
        w_const: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Principal Dirichlet eigenvalue of the box, as JSON on stdout.
    Eigen {
        #[arg(long)]
        ell: f64,
        #[arg(long = "L")]
        height: f64,
        #[arg(long, default_value_t = 32)]
        nx: usize,
        #[arg(long, default_value_t = 32)]
        ny: usize,
        /// Field diffusivity; adds the KPP check and epsilon for a Fisher field.
        #[arg(long = "D")]
        d: Option<f64>,
    },
    /// Domain growth study; writes growth.csv and growth.json.
    Grow {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
        ells: Vec<f64>,
        #[arg(long, default_value_t = 2.0)]
        ell0: f64,
        #[arg(long, default_value_t = 0.125)]
        h1: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle suite and print pass/fail JSON.
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { config, out, two_road } => {
            let cfg = RunConfig::load(&config)?;
            let s = run_solve(&cfg, out.as_deref(), two_road)?;
            println!(
                "u_nontrivial = {}, v_nontrivial = {}, sup u = {:.6e}, outer iterations {}/{}",
                s.u_nontrivial, s.v_nontrivial, s.upper.u.sup, s.lower.outer.iterations, s.upper.outer.iterations
            );
        }
        Command::FieldOnly { config, w, w_const, out } => {
            let cfg = RunConfig::load(&config)?;
            let road = match (w, w_const) {
                (Some(path), _) => RoadInput::Csv(path),
                (None, Some(c)) => RoadInput::Constant(c),
                (None, None) => RoadInput::Constant(cfg.model_params()?.m),
            };
            let s = run_field_only(&cfg, &road, out.as_deref())?;
            println!("{} sweeps, |v_max - v_min| = {:.3e}", s.report.sweeps, s.report.gap);
        }
        Command::Eigen { ell, height, nx, ny, d } => {
            print!("{}", to_pretty_json(&run_eigen(ell, height, nx, ny, d)?));
        }
        Command::Grow {
            config,
            ells,
            ell0,
            h1,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let r = run_grow(&cfg, &ells, ell0, h1, out.as_deref())?;
            let mut csv = Vec::new();
            r.write_csv(&mut csv)?;
            print!("{}", String::from_utf8_lossy(&csv));
        }
        Command::Validate { out } => {
            let r = run_validate(out.as_deref())?;
            print!("{}", to_pretty_json(&r));
            if !r.passed() {
                let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
                return Err(ChecksFailed(failed.join(", ")).into());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
