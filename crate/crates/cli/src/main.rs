use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use poolcheck::ErrorKind;

mod commands;

/// Decide whether data from several sites can be pooled into one
/// regression, and fit sparse multi-site models.
#[derive(Debug, Parser)]
#[command(name = "poolcheck", version)]
pub struct Cli {
    /// Print results as single-line JSON.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

/// How to read site CSV files.
#[derive(Debug, Clone, Args)]
pub struct CsvArgs {
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Comma-separated confound columns.
    #[arg(long, value_delimiter = ',')]
    pub confounds: Vec<String>,
    /// Comma-separated columns to skip.
    #[arg(long, value_delimiter = ',')]
    pub ignore: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one site's OLS model and write its summary file.
    FitSite {
        /// Site CSV with a header row.
        csv: PathBuf,
        #[command(flatten)]
        columns: CsvArgs,
        /// Site identifier; defaults to the file stem.
        #[arg(long)]
        site_id: Option<String>,
        /// Append an intercept column.
        #[arg(long)]
        intercept: bool,
        /// Summary file to write.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Test whether pooling the summarized sites reduces the MSE of β̂.
    PoolTest {
        /// Summary files written by `fit-site`.
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
        /// Level of the test.
        #[arg(long, default_value_t = 0.05)]
        significance: f64,
        /// Zero-based index of the reference site.
        #[arg(long, default_value_t = 0)]
        reference: usize,
        /// Comma-separated site weights, the reference first and equal to 1.
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<f64>>,
        /// Require every summary to carry a conditional covariance.
        #[arg(long)]
        subset: bool,
    },
    /// Bias bound factor and variance reduction of the pooled estimator.
    MseBounds {
        /// Summary files written by `fit-site`.
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
        /// Comma-separated site weights; estimated from the summaries if absent.
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<f64>>,
    },
    /// Fit the sparse multi-site Lasso at one (α, λ).
    LassoFit {
        /// Site CSV files.
        #[arg(required = true)]
        sites: Vec<PathBuf>,
        #[command(flatten)]
        columns: CsvArgs,
        /// Mixing weight between the ℓ₁ and group-ℓ₂ penalties, in [0, 1].
        #[arg(long)]
        alpha: f64,
        /// Penalty level.
        #[arg(long)]
        lambda: f64,
        /// Scale each site's columns to unit root-mean-square before fitting.
        #[arg(long)]
        standardize: bool,
        /// Fit an unpenalized intercept per site.
        #[arg(long)]
        intercept: bool,
        /// Write the coefficient matrix as CSV here.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Warm-started solution path with optional cross-validation.
    LassoPath {
        /// Site CSV files.
        #[arg(required = true)]
        sites: Vec<PathBuf>,
        #[command(flatten)]
        columns: CsvArgs,
        /// Mixing weight between the ℓ₁ and group-ℓ₂ penalties, in [0, 1].
        #[arg(long)]
        alpha: f64,
        /// Explicit decreasing λ grid; defaults to a log grid from λ_max.
        #[arg(long, value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        /// Number of λ values on the default grid.
        #[arg(long, default_value_t = 100)]
        n_lambdas: usize,
        /// Folds for cross-validation; 0 disables it.
        #[arg(long, default_value_t = 10)]
        cv_folds: usize,
        /// Seed for the fold assignment.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale each site's columns to unit root-mean-square before fitting.
        #[arg(long)]
        standardize: bool,
        /// Fit an unpenalized intercept per site.
        #[arg(long)]
        intercept: bool,
        /// Write the path table as CSV here.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Choose the mixing weight α from per-site significant features.
    SelectAlpha {
        /// Site CSV files.
        #[arg(required = true, num_args = 2..)]
        sites: Vec<PathBuf>,
        #[command(flatten)]
        columns: CsvArgs,
        #[command(flatten)]
        selection: SelectionArgs,
    },
    /// Variable selection followed by the pooling test on the shared support.
    SelectedPoolTest {
        /// Site CSV files.
        #[arg(required = true, num_args = 2..)]
        sites: Vec<PathBuf>,
        #[command(flatten)]
        columns: CsvArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        /// Level of the pooling test.
        #[arg(long, default_value_t = 0.05)]
        significance: f64,
    },
    /// Run a seeded simulation study and write CSV tables and SVG plots.
    Simulate {
        /// shared-beta, confounded, few-shared or most-shared.
        #[arg(long)]
        scenario: String,
        /// Base seed; every replicate derives its own stream from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replicates per sample size (two-site scenarios).
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        /// Comma-separated per-site sample sizes (two-site scenarios).
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Folds for the sparse scenarios' cross-validation.
        #[arg(long, default_value_t = 10)]
        cv_folds: usize,
        /// λ grid size for the sparse scenarios.
        #[arg(long, default_value_t = 100)]
        n_lambdas: usize,
        /// Directory for the CSV tables and SVG plots.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// m-sparse eigenvalues of the block-diagonal design matrix.
    MsparseEigen {
        /// Site CSV files.
        #[arg(required = true)]
        sites: Vec<PathBuf>,
        #[command(flatten)]
        columns: CsvArgs,
        /// Sparsity level; supports have at most ⌈m⌉ entries.
        #[arg(long)]
        m: f64,
        /// Largest number of supports to enumerate before switching to the
        /// heuristic search.
        #[arg(long, default_value_t = poolcheck::diagnostics::DEFAULT_ENUMERATION_BUDGET)]
        budget: usize,
        /// Seed for the heuristic search's random starts.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SelectionArgs {
    /// Seed for the sample splits and cross-validation folds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of random sample splits per site.
    #[arg(long, default_value_t = 50)]
    pub splits: usize,
    /// Familywise error level for the site-active sets.
    #[arg(long, default_value_t = 0.05)]
    pub fwer: f64,
    /// Comma-separated α grid.
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    /// Mean Jaccard index at or above which supports count as similar.
    #[arg(long, default_value_t = 0.5)]
    pub jaccard_threshold: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    poolcheck::sim::configure_threads_from_env();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Data => ExitCode::from(3),
                ErrorKind::Numerical => ExitCode::from(4),
            }
        }
    }
}
