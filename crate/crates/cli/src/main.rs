//! `kernreg`: fit margin-loss classifiers, estimate kernels from squared
//! dissimilarities, place new objects, unroll manifolds and rerun the toy
//! probability study.

mod commands;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "kernreg", version, about = "Kernel classifiers and regularized kernel estimation")]
struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for grid searches and cross-validation. Output does
    /// not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a classifier on a Gram matrix or on points.
    Fit(FitArgs),
    /// Decision values of a fitted model.
    Predict(PredictArgs),
    /// Fit a kernel to squared dissimilarities.
    RkeFit(RkeFitArgs),
    /// Place a new object into a fitted kernel.
    Newbie(NewbieArgs),
    /// Flatten a manifold from its nearest-neighbour distances.
    Unroll(UnrollArgs),
    /// Tune the kernel-fit penalty by holding out pairs.
    Cv2(Cv2Args),
    /// Hinge versus likelihood study on the toy problem.
    Figure2(Figure2Args),
    /// Generate synthetic data.
    #[command(subcommand)]
    Gen(GenCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelKind {
    Gaussian,
    Linear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossKind {
    Hinge,
    Logistic,
    Squared,
    /// Squared error with an ℓ1 penalty on the coefficients.
    L1,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverKind {
    Auto,
    Splitting,
    Barrier,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct GeometryInput {
    /// Gram matrix, whitespace-separated rows.
    #[arg(long)]
    gram: Option<PathBuf>,
    /// Points CSV with header x1,...,xd.
    #[arg(long)]
    points: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    geometry: GeometryInput,
    /// Kernel applied to --points.
    #[arg(long, value_enum, default_value_t = KernelKind::Gaussian)]
    kernel: KernelKind,
    /// Gaussian kernel width c in exp(-|x - y|²/c).
    #[arg(long, default_value_t = 1.0)]
    width: f64,
    /// Labels CSV with header i,y and y in {-1, 0, 1}; 0 or absent means
    /// unlabeled.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_enum)]
    loss: LossKind,
    /// Hinge slope θ in (1 - θτ)₊.
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// Penalty weight.
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct QueryInput {
    /// Predict at the training objects.
    #[arg(long)]
    training: bool,
    /// Query points CSV with header x1,...,xd (point-based models only).
    #[arg(long)]
    points: Option<PathBuf>,
    /// Kernel rows against the training objects, one query per line.
    #[arg(long)]
    gram_rows: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    query: QueryInput,
    /// CSV with header i,f,class (plus p for logistic models).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = SolverKind::Auto)]
    solver: SolverKind,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Args)]
struct RkeFitArgs {
    /// Dissimilarity CSV with header i,j,d; d are squared dissimilarities.
    #[arg(long)]
    dissim: PathBuf,
    /// Number of objects; defaults to the largest index plus one.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    mu: f64,
    /// Trace share kept in the exported embedding.
    #[arg(long, default_value_t = 0.95)]
    trace_frac: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory for kernel.txt, spectrum.csv, embedding.csv and
    /// residuals.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct NewbieArgs {
    /// Fitted kernel, whitespace-separated rows.
    #[arg(long)]
    kernel: PathBuf,
    /// CSV with header i,d of squared dissimilarities to the new object.
    #[arg(long)]
    dissim: PathBuf,
    /// Model fitted on the same kernel; adds its decision value.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 50_000)]
    max_iter: usize,
    /// Output directory for embedding.csv, kernel_row.csv and
    /// extended_kernel.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct DistanceInput {
    /// Points CSV with header x1,...,xd.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Dissimilarity CSV with header i,j,d covering every pair.
    #[arg(long)]
    dissim: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct UnrollArgs {
    #[command(flatten)]
    input: DistanceInput,
    /// Neighbours per object.
    #[arg(long, default_value_t = 6)]
    k: usize,
    #[arg(long)]
    mu: f64,
    /// Embedding dimension.
    #[arg(long, default_value_t = 2)]
    dims: usize,
    /// Trace cap as a multiple of the exact-fit bound.
    #[arg(long, default_value_t = 10.0)]
    cap_factor: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory for embedding.csv, spectrum.csv, kernel.txt and
    /// residuals.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Cv2Args {
    #[arg(long)]
    dissim: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated penalty values.
    #[arg(long, value_delimiter = ',', required = true)]
    mu_grid: Vec<f64>,
    #[arg(long, default_value_t = 0.2)]
    holdout: f64,
    #[arg(long, default_value_t = 0.95)]
    trace_frac: f64,
    #[command(flatten)]
    solver: SolverArgs,
    /// CSV with header mu,error.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Figure2Args {
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    width: f64,
    /// Fixed hinge penalty; cross-validated when omitted.
    #[arg(long)]
    mu_svm: Option<f64>,
    /// Fixed likelihood penalty; cross-validated when omitted.
    #[arg(long)]
    mu_pl: Option<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// CSV with header x,truth,svm,likelihood.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum GenCommand {
    /// Labels drawn with P(y = 1 | x) = 1/(1 + e^{-3x}) on a grid over [-2, 2].
    Toy {
        #[arg(long, default_value_t = 300)]
        n: usize,
        /// Points CSV (x1) for the grid.
        #[arg(long)]
        points: PathBuf,
        /// Labels CSV (i,y).
        #[arg(long)]
        labels: PathBuf,
    },
    /// Points (t cos t, h, t sin t) with t on [1.5π, 4.5π], h on [0, 10].
    SwissRoll {
        #[arg(long, default_value_t = 150)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Points CSV (x1,x2,x3).
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV (i,t,h) of the latent coordinates.
        #[arg(long)]
        latent: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    // a second initialisation only happens in tests; the first pool wins
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    let seed = cli.seed;
    match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Predict(a) => commands::predict(a),
        Command::RkeFit(a) => commands::rke_fit(a),
        Command::Newbie(a) => commands::newbie(a),
        Command::Unroll(a) => commands::unroll_manifold(a),
        Command::Cv2(a) => commands::cv2(a, seed),
        Command::Figure2(a) => commands::figure2(a, seed),
        Command::Gen(g) => commands::generate(g, seed),
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
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
