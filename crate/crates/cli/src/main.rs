use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod report;

use report::Failure;

#[derive(Parser, Debug)]
#[command(name = "gaussdiss", version, about = "Quasilocal dissipative preparation of pure Gaussian states")]
struct Cli {
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Polar,
    Gs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Certify the steady state of a system file.
    Verify {
        system: PathBuf,
        /// Tolerance on every certificate residual.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Build the switching protocol for a cluster-state graph.
    Cluster {
        /// Adjacency CSV or edge-list JSON.
        graph: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        r: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Polar)]
        method: MethodArg,
        /// Rabi frequency scale for the laser schedule.
        #[arg(long, default_value_t = 1.0)]
        omega: f64,
        /// Row premix for the Gram-Schmidt route: `square` or a JSON matrix file.
        #[arg(long)]
        premix: Option<String>,
        /// Output directory for the bundle.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a protocol bundle stage by stage.
    Switch {
        bundle: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        /// Stage convergence tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Time cap per stage, in units of 1/mu.
        #[arg(long, default_value_t = 500.0)]
        max_duration: f64,
        /// Run only the first N stages.
        #[arg(long)]
        stages: Option<usize>,
        /// Coupling rate used to convert reported durations to physical time.
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Write the final covariance here as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the two-ensemble negativity over (xi, kappa).
    Sweep {
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        /// `min:max:steps`
        #[arg(long, default_value = "0.05:3:50")]
        xi: String,
        /// `min:max:steps`
        #[arg(long, default_value = "0.05:3:50")]
        kappa: String,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the two-ensemble cavity system as a system file.
    Epr {
        #[arg(long, default_value_t = 0.8)]
        r: f64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        /// Destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { report::EXIT_USAGE } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let json = cli.json;
    let result = match cli.command {
        Command::Verify { system, tol } => commands::verify(&system, tol, json),
        Command::Cluster { graph, r, method, omega, premix, out } => {
            commands::cluster(&graph, r, method, omega, premix.as_deref(), out.as_deref(), json)
        }
        Command::Switch { bundle, kappa, tol, max_duration, stages, mu, out } => {
            commands::switch(&bundle, kappa, tol, max_duration, stages, mu, out.as_deref(), json)
        }
        Command::Sweep { gamma, epsilon, xi, kappa, out } => {
            commands::sweep(gamma, epsilon, &xi, &kappa, out.as_deref(), json)
        }
        Command::Epr { r, kappa, gamma, epsilon, out } => commands::epr(r, kappa, gamma, epsilon, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
