//! `laplace-limits`: sample, build, assemble, validate and embed from the
//! command line. Every output file gets a JSON sidecar carrying the hash of
//! the configuration that produced it.
//!
//! Exit codes: 2 usage, 3 data, 4 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use laplace_limits::Error;

const THREADS_VAR: &str = "LAPLACE_LIMITS_THREADS";

#[derive(Parser)]
#[command(name = "laplace-limits", version, about = "Graph Laplacians on sampled manifolds and their limits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample points from a manifold.
    Sample {
        /// Shipped name (`circle`, `toroidal_helix`, `gauss_sheet`,
        /// `flat_interval`, optionally `:density`), inline JSON or a JSON file.
        #[arg(long)]
        manifold: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a neighborhood graph from a point table.
    Build {
        #[arg(long)]
        points: PathBuf,
        /// r_neighborhood, knn_directed, knn_undirected_or, self_tuning,
        /// pilot_weighted_knn or degree_normalized.
        #[arg(long)]
        construction: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        h: Option<f64>,
        /// Density table for pilot weights; estimated with the same `k` when omitted.
        #[arg(long)]
        pilot: Option<PathBuf>,
        /// Intrinsic dimension; read from the point cloud sidecar when omitted.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble a scaled graph Laplacian.
    Laplacian {
        #[arg(long)]
        graph: PathBuf,
        /// random_walk, unnormalized or normalized.
        #[arg(long, default_value = "random_walk")]
        kind: String,
        /// Intrinsic dimension; read from the graph sidecar when omitted.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the validation suites of an experiment config.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Embed the points with Laplacian eigenmaps or LLE.
    Embed {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, value_enum, default_value_t = Method::Eigenmap)]
        method: Method,
        /// Point table, required for LLE.
        #[arg(long)]
        points: Option<PathBuf>,
        /// LLE neighbor count; taken from the graph when omitted.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1e-3)]
        reg: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the sampling density with kNN radii.
    Density {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        k: usize,
        /// Intrinsic dimension; read from the point cloud sidecar when omitted.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Eigenmap,
    Lle,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_)
        | Error::InvalidManifold(_)
        | Error::InvalidKernel(_)
        | Error::KOutOfRange { .. }
        | Error::UnknownConstruction(_) => 2,
        Error::DimensionMismatch { .. }
        | Error::OutOfChart(_)
        | Error::TooFewSamples { .. }
        | Error::Parse(_)
        | Error::Io(_)
        | Error::Json(_) => 3,
        Error::SamplerExhausted { .. }
        | Error::Domain(_)
        | Error::IsolatedVertex(_)
        | Error::SingularSystem(_)
        | Error::NotSymmetric(_)
        | Error::NoConvergence { .. }
        | Error::Disconnected(_)
        | Error::EmptyInterior => 4,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let threads: usize =
        value.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
            Error::InvalidParameter(format!("{THREADS_VAR} must be a positive integer, got {value:?}"))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Sample { manifold, n, seed, out } => commands::sample(&manifold, n, seed, &out),
        Command::Build { points, construction, k, h, pilot, m, out } => {
            commands::build(&points, &construction, k, h, pilot.as_deref(), m, &out)
        }
        Command::Laplacian { graph, kind, m, out } => commands::laplacian(&graph, &kind, m, &out),
        Command::Validate { config } => commands::validate(&config),
        Command::Embed { graph, dim, method, points, k, reg, out } => match method {
            Method::Eigenmap => {
                let graph = graph.ok_or_else(|| Error::InvalidParameter("eigenmap needs --graph".into()))?;
                commands::embed_eigenmap(&graph, dim, &out)
            }
            Method::Lle => {
                let points = points.ok_or_else(|| Error::InvalidParameter("lle needs --points".into()))?;
                commands::embed_lle(&points, graph.as_deref(), k, reg, dim, &out)
            }
        },
        Command::Density { points, k, m, out } => commands::density(&points, k, m, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
