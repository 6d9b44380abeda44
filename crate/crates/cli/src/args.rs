use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bart", version, about = "Bayesian additive regression trees")]
pub struct Cli {
    /// Worker threads; defaults to the available cores. Results never depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Master seed. Per-chain and per-replicate seeds are derived from it.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Print sampler progress to standard error.
    #[arg(long, global = true)]
    pub progress: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write an archive.
    Train(TrainArgs),
    /// Predict with a saved model; CSV out.
    Predict(PredictArgs),
    /// k-fold cross-validation; JSON out.
    Cv(CvArgs),
    /// Cross-validated grid search over k, (nu, q) and tree count; JSON out.
    Cvgrid(CvGridArgs),
    /// Permutation-based variable selection; JSON out.
    Varsel(VarselArgs),
    /// Permutation test for a covariate set or the whole model; JSON out.
    Covtest(CovtestArgs),
    /// Partial dependence of one predictor; CSV out.
    Pdp(PdpArgs),
    /// Variable inclusion proportions; CSV out.
    Importance(ImportanceArgs),
    /// Pairwise interaction counts; CSV out.
    Interactions(InteractionsArgs),
    /// Summary block, trace CSVs and residuals.
    Diagnostics(DiagnosticsArgs),
    /// Holdout RMSE as a function of the number of trees; CSV out.
    RmseByTrees(RmseByTreesArgs),
    /// Write a simulated Friedman data set as CSV.
    SimulateFriedman(SimulateArgs),
    /// Dump an archive as JSON.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Auto,
    Regression,
    Classification,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    pub response: String,
    /// A two-level categorical response means classification unless overridden.
    #[arg(long, value_enum, default_value_t = TaskArg::Auto)]
    pub task: TaskArg,
    /// Positive class label for classification.
    #[arg(long)]
    pub positive_level: Option<String>,
    /// Route missing values with MIA splits instead of rejecting them.
    #[arg(long)]
    pub use_missing_data: bool,
    /// Also add a missingness indicator column per incomplete predictor.
    #[arg(long, requires = "use_missing_data")]
    pub missing_dummies: bool,
    /// Drop rows with any missing predictor before fitting.
    #[arg(long, conflicts_with = "use_missing_data")]
    pub drop_missing: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    /// TOML file of hyperparameters; flags below override it.
    #[arg(long, visible_alias = "model-config")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub num_trees: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub post_burn_in: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Comma-separated GROW,PRUNE,CHANGE probabilities.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub proposal_probs: Option<Vec<f64>>,
    /// Comma-separated weight per model column.
    #[arg(long, value_delimiter = ',')]
    pub cov_prior: Option<Vec<f64>>,
    #[arg(long)]
    pub prob_rule_class: Option<f64>,
    /// Disable the split-candidate cache. Results are unchanged.
    #[arg(long)]
    pub no_memcache: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Archive to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Leave the per-iteration traces out of the archive.
    #[arg(long)]
    pub no_traces: bool,
    /// Also write the summary block here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntervalArg {
    None,
    Credible,
    Predictive,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = IntervalArg::None)]
    pub intervals: IntervalArg,
    #[arg(long, default_value_t = 0.95)]
    pub conf: f64,
    /// Noise draws per posterior sample for predictive intervals.
    #[arg(long, default_value_t = 1000)]
    pub num_draws: usize,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvGridArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long = "grid-k", value_delimiter = ',', default_values_t = [2.0, 3.0, 5.0])]
    pub grid_k: Vec<f64>,
    /// Comma-separated nu:q pairs.
    #[arg(long = "grid-nu-q", value_delimiter = ',', default_values_t = ["3:0.9".to_string(), "3:0.99".to_string(), "10:0.75".to_string()])]
    pub grid_nu_q: Vec<String>,
    #[arg(long = "grid-trees", value_delimiter = ',', default_values_t = [50usize, 200])]
    pub grid_trees: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VarselArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value_t = 100)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha_level: f64,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Trees per selection fit.
    #[arg(long, default_value_t = 20)]
    pub selection_trees: usize,
    /// Choose among the rules by cross-validation with this many folds.
    #[arg(long)]
    pub cv_folds: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CovtestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Comma-separated column or factor names, permuted jointly.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["all_covariates", "omnibus"])]
    pub covariates: Option<Vec<String>>,
    /// Permute every predictor jointly.
    #[arg(long)]
    pub all_covariates: bool,
    /// Permute the response instead (omnibus test).
    #[arg(long)]
    pub omnibus: bool,
    #[arg(long, default_value_t = 100)]
    pub permutations: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PdpArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Data to average over, usually the training CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Model column name.
    #[arg(long)]
    pub feature: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    /// Report one saved model.
    #[arg(long, conflicts_with_all = ["data", "response"])]
    pub model: Option<PathBuf>,
    /// Or fit `--replicates` models on this CSV and average.
    #[arg(long, requires = "response")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long, value_enum, default_value_t = TaskArg::Auto)]
    pub task: TaskArg,
    #[arg(long)]
    pub positive_level: Option<String>,
    #[arg(long)]
    pub use_missing_data: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InteractionsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnosticsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory for trace CSVs, residuals.csv and summary.txt.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RmseByTreesArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10, 20, 50, 100])]
    pub trees: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub replicates: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
