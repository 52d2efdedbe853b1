//! `romkit` command-line front end.
//!
//! Exit codes: 0 success, 1 usage/validation/parse/I/O errors, 2 numerical
//! failures (rank deficiency, non-convergence, ill-conditioning, degenerate
//! data). Diagnostics go to stderr; results only to the declared files.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "romkit", version, about = "Data-driven reduced-order modeling toolkit")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// JSON file with default option values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More diagnostics on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only report errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dynamic mode decomposition.
    #[command(subcommand)]
    Dmd(DmdCmd),
    /// POD with interpolation over a parameter space.
    #[command(subcommand)]
    Podi(PodiCmd),
    /// Active subspaces from gradient or input/output samples.
    #[command(subcommand)]
    Asub(AsubCmd),
    /// Geometry morphing of point clouds and STL surfaces.
    #[command(subcommand)]
    Morph(MorphCmd),
    /// Snapshot dataset inspection and conversion.
    #[command(subcommand)]
    Snap(SnapCmd),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatArg {
    Csv,
    Romk,
}

#[derive(Args, Debug, Clone)]
pub struct SnapshotInput {
    /// Snapshot file (CSV: one row per DOF, one column per snapshot; or .romk).
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Override the format implied by the extension.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RankArgs {
    /// Keep exactly this many modes.
    #[arg(long, conflicts_with = "energy")]
    pub rank: Option<usize>,
    /// Keep the fewest modes holding this fraction of Σσ².
    #[arg(long)]
    pub energy: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelArg {
    Idw,
    RbfGaussian,
    RbfThinPlate,
    RbfMultiquadric,
}

#[derive(Args, Debug, Clone, Default)]
pub struct InterpArgs {
    /// Interpolator kind.
    #[arg(long, value_enum)]
    pub interp: Option<KernelArg>,
    /// Shape parameter ε for gaussian and multiquadric kernels.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// IDW power p.
    #[arg(long)]
    pub power: Option<f64>,
    /// Ridge term λ added to the kernel diagonal.
    #[arg(long)]
    pub regularization: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum DmdCmd {
    /// Fit an exact DMD model to a snapshot sequence.
    Fit {
        #[command(flatten)]
        input: SnapshotInput,
        #[command(flatten)]
        rank: RankArgs,
        /// Time step between snapshots (overrides times/manifest).
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Rebuild states at steps 0..steps-1 as CSV columns.
    Reconstruct {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Number of steps (default: the training snapshot count).
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Evaluate the continuous-time extension at the given times.
    Forecast {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Comma-separated times.
        #[arg(long, allow_hyphen_values = true)]
        times: String,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Write eigenvalues, continuous rates, moduli and frequencies as CSV.
    Spectrum {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum PodiCmd {
    /// Build a POD basis and fit coefficient interpolants.
    Fit {
        #[command(flatten)]
        input: SnapshotInput,
        /// Parameter table: header row of names, one row per snapshot
        /// (default: the parameter table of the snapshot manifest).
        #[arg(long, value_name = "FILE")]
        params: Option<PathBuf>,
        #[command(flatten)]
        rank: RankArgs,
        #[command(flatten)]
        interp: InterpArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Evaluate the model at parameter points; one output column per --mu.
    Eval {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Comma-separated parameter point; repeat for several.
        #[arg(long, required = true, allow_hyphen_values = true)]
        mu: Vec<String>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct DimArgs {
    /// Fixed active dimension.
    #[arg(long, conflicts_with_all = ["gap", "dim_energy"])]
    pub dim: Option<usize>,
    /// Choose the dimension at the largest eigenvalue gap (default).
    #[arg(long, conflicts_with = "dim_energy")]
    pub gap: bool,
    /// Smallest dimension holding this fraction of Σλ.
    #[arg(long = "dim-energy")]
    pub dim_energy: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct SubspaceFiles {
    /// Eigenvalue CSV written by `asub compute`.
    #[arg(long, value_name = "FILE")]
    pub eigenvalues: PathBuf,
    /// Eigenvector CSV written by `asub compute`.
    #[arg(long, value_name = "FILE")]
    pub eigenvectors: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum AsubCmd {
    /// Estimate gradients from input/output samples by local linear regression.
    Gradients {
        /// Sample CSV: header row, N parameter columns then the value column.
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Neighbourhood size per regression (default 2N+2, capped at M).
        #[arg(long)]
        neighbors: Option<usize>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Covariance eigendecomposition and active dimension.
    Compute {
        /// Gradient CSV (N point columns, N gradient columns, optional
        /// trailing `weight` column), or a sample CSV with --samples.
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Input is a sample CSV; gradients are estimated first.
        #[arg(long)]
        samples: bool,
        #[arg(long, requires = "samples")]
        neighbors: Option<usize>,
        #[command(flatten)]
        dim: DimArgs,
        #[command(flatten)]
        outputs: SubspaceFiles,
    },
    /// Project points onto the active variables.
    Project {
        #[command(flatten)]
        subspace: SubspaceFiles,
        /// Point CSV: header row, N columns.
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Sufficient-summary table (active coordinates, value).
    Summary {
        #[command(flatten)]
        subspace: SubspaceFiles,
        /// Sample CSV: header row, N parameter columns then the value column.
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct GeometryIo {
    /// ASCII STL (.stl) or point CSV (x,y,z per row).
    #[arg(long = "in", value_name = "FILE")]
    pub input: PathBuf,
    /// Same kind as the input.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Merge STL vertices closer than 1e-9 after reading.
    #[arg(long)]
    pub weld: bool,
}

#[derive(Subcommand, Debug)]
pub enum MorphCmd {
    /// Free-form deformation with a JSON control lattice.
    Ffd {
        #[arg(long, value_name = "FILE")]
        lattice: PathBuf,
        #[command(flatten)]
        io: GeometryIo,
    },
    /// Inverse-distance-weighted deformation.
    Idw {
        /// Control CSV: x,y,z,dx,dy,dz per row.
        #[arg(long, value_name = "FILE")]
        controls: PathBuf,
        #[arg(long)]
        power: Option<f64>,
        #[command(flatten)]
        io: GeometryIo,
    },
    /// Radial-basis-function deformation.
    Rbf {
        /// Control CSV: x,y,z,dx,dy,dz per row.
        #[arg(long, value_name = "FILE")]
        controls: PathBuf,
        #[command(flatten)]
        interp: InterpArgs,
        #[command(flatten)]
        io: GeometryIo,
    },
}

#[derive(Subcommand, Debug)]
pub enum SnapCmd {
    /// Dimensions, time step, parameters and checksum as JSON.
    Info {
        #[command(flatten)]
        input: SnapshotInput,
        /// Write to this file instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Convert between CSV and romk-binary (manifest written alongside).
    Convert {
        #[command(flatten)]
        input: SnapshotInput,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Output format (default: from the extension).
        #[arg(long = "to", value_enum)]
        to: Option<FormatArg>,
    },
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        match cli.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(&cli);
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
