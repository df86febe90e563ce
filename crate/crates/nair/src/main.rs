//! Thin command-line front end over the library's `cli` module.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nair::cli::{
    cmd_bench, cmd_diagnose, cmd_generate, cmd_solve, exit_code, BenchConfig, DiagnoseConfig,
    GenerateConfig, OutputFormat, ProblemInput, SolveConfig,
};
use nair::hierarchy::{CycleType, SolverOptions};

#[derive(Parser)]
#[command(
    name = "nair",
    about = "Reduction-based algebraic multigrid for near-triangular systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// Neumann degree of the restriction
    #[arg(long = "k", default_value_t = 1)]
    k: usize,
    /// Strength drop tolerance for the restriction build
    #[arg(long = "phi-restrict", default_value_t = 0.025)]
    phi_restrict: f64,
    /// Strength threshold for the CF-splitting
    #[arg(long = "theta-split", default_value_t = 0.25)]
    theta_split: f64,
    /// Coarse-operator filter tolerance
    #[arg(long = "filter-tol", default_value_t = 1e-3)]
    filter_tol: f64,
    /// Cycle type
    #[arg(long = "cycle", default_value = "v", value_parser = parse_cycle)]
    cycle: CycleType,
    /// F-relaxation sweeps (default: k + 1)
    #[arg(long = "sweeps")]
    sweeps: Option<usize>,
    /// Largest size solved directly
    #[arg(long = "max-coarse", default_value_t = 40)]
    max_coarse: usize,
    /// Maximum number of levels
    #[arg(long = "max-levels", default_value_t = 30)]
    max_levels: usize,
    /// Enable Jacobi C-relaxation after F-relaxation
    #[arg(long = "c-relax", default_value_t = false)]
    c_relax: bool,
}

fn parse_cycle(s: &str) -> Result<CycleType, String> {
    match s {
        "v" | "V" => Ok(CycleType::V),
        "f" | "F" => Ok(CycleType::F),
        other => Err(format!("unknown cycle `{other}` (expected v or f)")),
    }
}

impl SolverFlags {
    fn to_options(&self) -> SolverOptions {
        SolverOptions {
            neumann_degree: self.k,
            restrict_strength: self.phi_restrict,
            split_strength: self.theta_split,
            filter_tol: self.filter_tol,
            max_coarse: self.max_coarse,
            max_levels: self.max_levels,
            f_relax_sweeps: self.sweeps,
            cycle: self.cycle,
            enable_c_relax: self.c_relax,
            c_relax_sweeps: 1,
        }
    }
}

#[derive(Args, Clone)]
struct InputFlags {
    /// Problem spec, e.g. transport:dim=2,n=64,velocity=theta:0.589
    #[arg(long)]
    problem: Option<String>,
    /// Matrix Market file to read instead of generating
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Right-hand side file (plain text, one value per line)
    #[arg(long)]
    rhs: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a test system: Matrix Market file plus JSON sidecar
    Generate {
        /// Problem spec to generate
        #[arg(long)]
        problem: String,
        /// Output matrix path (sidecar replaces the extension with .json)
        #[arg(long)]
        out: PathBuf,
    },
    /// Set up the hierarchy and run the stationary or GMRES solver
    Solve {
        #[command(flatten)]
        input: InputFlags,
        #[command(flatten)]
        solver: SolverFlags,
        /// Relative residual tolerance
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Iteration budget
        #[arg(long = "max-iters", default_value_t = 200)]
        max_iters: usize,
        /// Accelerate with restarted GMRES, preconditioned by one V-cycle
        #[arg(long, default_value_t = false)]
        gmres: bool,
        /// GMRES restart length
        #[arg(long, default_value_t = 50)]
        restart: usize,
        /// Report path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format
        #[arg(long, default_value = "json", value_parser = OutputFormat::parse)]
        format: OutputFormat,
    },
    /// Emit delta-norm sweeps, identity residuals, and nilpotency checks
    Diagnose {
        #[command(flatten)]
        input: InputFlags,
        #[command(flatten)]
        solver: SolverFlags,
        /// Neumann degrees to sweep (comma separated)
        #[arg(long = "ks", default_value = "0,1,2,3", value_parser = parse_usize_list)]
        degrees: std::vec::Vec<usize>,
        /// F-relaxation sweep counts to sweep (comma separated)
        #[arg(long = "sweep-counts", default_value = "1,2,3,4", value_parser = parse_usize_list)]
        sweep_counts: std::vec::Vec<usize>,
        /// Use the dense ideal operators instead of the Neumann restriction
        #[arg(long, default_value_t = false)]
        ideal: bool,
        /// Report path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format
        #[arg(long, default_value = "csv", value_parser = OutputFormat::parse)]
        format: OutputFormat,
    },
    /// Solve over a list of grid sizes and Neumann degrees
    Bench {
        /// Problem spec template; n= is overridden by each size
        #[arg(long, default_value = "transport:dim=2")]
        problem: String,
        /// Grid sizes (cells per axis, comma separated)
        #[arg(long, default_value = "16,32,64", value_parser = parse_usize_list)]
        sizes: std::vec::Vec<usize>,
        /// Neumann degrees to compare (comma separated)
        #[arg(long = "ks", default_value = "1,2", value_parser = parse_usize_list)]
        degrees: std::vec::Vec<usize>,
        /// Cycle types to compare (comma separated)
        #[arg(long = "cycles", default_value = "v", value_parser = parse_cycle_list)]
        cycles: std::vec::Vec<CycleType>,
        #[command(flatten)]
        solver: SolverFlags,
        /// Relative residual tolerance
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Iteration budget per row
        #[arg(long = "max-iters", default_value_t = 200)]
        max_iters: usize,
        /// Report path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report format
        #[arg(long, default_value = "csv", value_parser = OutputFormat::parse)]
        format: OutputFormat,
    },
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("bad number `{p}`")))
        .collect()
}

fn parse_cycle_list(s: &str) -> Result<Vec<CycleType>, String> {
    s.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| parse_cycle(p.trim()))
        .collect()
}

fn run(cli: Cli) -> Result<ExitCode, nair::Error> {
    match cli.command {
        Command::Generate { problem, out } => {
            cmd_generate(&GenerateConfig { problem, out })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { input, solver, tol, max_iters, gmres, restart, out, format } => {
            let cfg = SolveConfig {
                input: ProblemInput::from_flags(input.problem, input.matrix, input.rhs)?,
                options: solver.to_options(),
                tol,
                max_iters,
                use_gmres: gmres,
                restart,
                out,
                format,
            };
            let report = cmd_solve(&cfg)?;
            if report.converged {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "did not converge in {} iterations (relative residual {:.3e})",
                    report.iterations,
                    report.residual_history.last().unwrap_or(&f64::NAN)
                        / report.residual_history.first().unwrap_or(&1.0)
                );
                Ok(ExitCode::from(2))
            }
        }
        Command::Diagnose { input, solver, degrees, sweep_counts, ideal, out, format } => {
            let cfg = DiagnoseConfig {
                input: ProblemInput::from_flags(input.problem, input.matrix, input.rhs)?,
                options: solver.to_options(),
                degrees,
                sweep_counts,
                ideal,
                out,
                format,
            };
            cmd_diagnose(&cfg)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            problem,
            sizes,
            degrees,
            cycles,
            solver,
            tol,
            max_iters,
            out,
            format,
        } => {
            let cfg = BenchConfig {
                problem,
                sizes,
                degrees,
                cycles,
                options: solver.to_options(),
                tol,
                max_iters,
                out,
                format,
            };
            cmd_bench(&cfg)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not usage errors
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
