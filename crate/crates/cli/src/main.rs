use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod archive;
mod commands;
mod config;
mod output;

use config::ConfigFile;

/// Exit status plus the error reported on stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    /// Invalid flags, ranges, configs or archives.
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }

    pub fn io(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 1,
            error: error.into(),
        }
    }
}

impl From<wavemap::Error> for Failure {
    fn from(e: wavemap::Error) -> Self {
        use wavemap::Error as E;
        let code = match e {
            E::Domain { .. } | E::RejectedParameter { .. } | E::Invalid { .. } | E::OutOfInterval { .. } => 2,
            _ => 3,
        };
        let stage = e.stage();
        let error = if e.to_string().starts_with(stage) {
            anyhow::Error::new(e)
        } else {
            anyhow::Error::new(e).context(stage)
        };
        Self { code, error }
    }
}

#[derive(Parser, Debug)]
#[command(name = "wavemap", version, about = "Self-similar corotational wave maps: profiles, residuals, evolution")]
struct Cli {
    /// `key = value` file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Glue a global profile and write its archive.
    Solve(SolveArgs),
    /// Sample an archived profile to CSV.
    ProfileCsv(ProfileCsvArgs),
    /// Residual norms of the regularized field over a range of times.
    ResidualScan(ResidualScanArgs),
    /// Evolve u_approx plus a perturbation and monitor it.
    Evolve(EvolveArgs),
    /// Band-limited critical norm against the low-frequency cutoff.
    Critnorm(CritnormArgs),
    /// Tabulate a fundamental system.
    Basis(BasisArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub d0: Option<f64>,
    /// small | large
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub d1t: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub q1: Option<f64>,
    /// Largest exported `a` of the exterior.
    #[arg(long)]
    pub a_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProfileCsvArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ResidualScanArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub cutoff_width: Option<f64>,
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub t_steps: Option<usize>,
    /// include | drop
    #[arg(long)]
    pub q4: Option<String>,
    /// analytic | fd
    #[arg(long)]
    pub method: Option<String>,
    /// Step of the finite-difference method in r and t.
    #[arg(long)]
    pub fd_step: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long = "T")]
    pub t0: Option<f64>,
    #[arg(long)]
    pub delta1: Option<f64>,
    #[arg(long)]
    pub horizon_factor: Option<f64>,
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub cutoff_width: Option<f64>,
    #[arg(long)]
    pub records: Option<usize>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CritnormArgs {
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long = "T")]
    pub t0: Option<f64>,
    #[arg(long)]
    pub kmin_decades: Option<f64>,
    #[arg(long)]
    pub cutoff_width: Option<f64>,
    /// Radial spacing of the inner uniform grid.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub k_max: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BasisArgs {
    /// interior | exterior
    #[arg(long)]
    pub table: Option<String>,
    #[arg(long)]
    pub a_min: Option<f64>,
    #[arg(long)]
    pub a_max: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::usage)?;
    }
    match cli.command {
        Command::Solve(a) => commands::solve(a, &cfg),
        Command::ProfileCsv(a) => commands::profile_csv(a, &cfg),
        Command::ResidualScan(a) => commands::residual_scan(a, &cfg),
        Command::Evolve(a) => commands::evolve(a, &cfg),
        Command::Critnorm(a) => commands::critnorm(a, &cfg),
        Command::Basis(a) => commands::basis(a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
