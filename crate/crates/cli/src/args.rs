use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Trainability analysis for IQP circuit Born machines.
#[derive(Clone, Debug, Parser, Serialize)]
#[command(name = "iqpbp", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct Global {
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "IQPBP_THREADS")]
    pub threads: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    /// Manifest path; defaults to `<out>.manifest.json` when `--out` is set.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Enumeration cap, as a power of two.
    #[arg(long, global = true, default_value_t = 24)]
    pub cap: u32,
}

#[derive(Clone, Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Anticommuting-set sizes and critical ranks per frequency.
    Ranks(RanksArgs),
    /// Variance of a characteristic value or gradient over initialisations.
    Variance(VarianceArgs),
    /// Anti-concentration sums across a sweep of register sizes.
    Anticoncentration(AnticoncentrationArgs),
    /// Variance scaling across register sizes for an architecture family.
    Scan(ScanArgs),
    /// SGD training from a JSON config.
    Train(TrainArgs),
    /// Bit strings sampled from the circuit's output distribution.
    Sample(CircuitArgs),
    /// Dense output probabilities.
    Probs(CircuitArgs),
    /// Compare row-space evaluation with statevector simulation.
    OracleVerify(OracleVerifyArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct RanksArgs {
    /// Architecture: product:N, lattice:RxC, er:N:C:SEED, complete:N, file:PATH.
    #[arg(long)]
    pub arch: String,
    /// Explicit frequencies (repeatable).
    #[arg(long = "a", conflicts_with_all = ["weights", "exhaustive"])]
    pub a: Vec<String>,
    /// Every frequency with weight in this list or range, e.g. 1-3.
    #[arg(long, conflicts_with = "exhaustive")]
    pub weights: Option<String>,
    /// All 2^n frequencies.
    #[arg(long)]
    pub exhaustive: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Closed,
    Empirical,
    Both,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct VarianceArgs {
    #[arg(long)]
    pub arch: String,
    /// char, grad or mmd-grad.
    #[arg(long, default_value = "grad")]
    pub quantity: String,
    /// uniform, gaussian:GAMMA, coin:PHI or moments:MU,NU,KAPPA.
    #[arg(long, default_value = "uniform")]
    pub init: String,
    /// Frequency (char and grad).
    #[arg(long = "a")]
    pub a: Option<String>,
    /// 1-based parameter index.
    #[arg(long, default_value_t = 1)]
    pub ell: usize,
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: Mode,
    /// Kernel for mmd-grad: gaussian:SIGMA, band:K1,K2 or explicit:PATH.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Target for mmd-grad: dirichlet:SEED, planted:A=C,..., dataset:PATH, explicit:PATH.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct AnticoncentrationArgs {
    /// product, complete, lattice:ROWS, er:C[:GRAPHS] or er-formula:C.
    #[arg(long, conflicts_with = "arch")]
    pub family: Option<String>,
    /// Single architecture instead of a sweep.
    #[arg(long)]
    pub arch: Option<String>,
    /// Register sizes, e.g. 2-16 or 16,64,256.
    #[arg(long)]
    pub n: Option<String>,
    /// Monte-Carlo samples instead of exhaustive summation.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ScanArgs {
    /// product, complete, lattice:ROWS or er:C[:GRAPHS].
    #[arg(long)]
    pub family: String,
    /// Register sizes, e.g. 4,6,8,10 or 4-12.
    #[arg(long)]
    pub n: String,
    /// char or grad.
    #[arg(long, default_value = "grad")]
    pub quantity: String,
    #[arg(long, default_value = "uniform")]
    pub init: String,
    /// Frequency weight (first k qubits).
    #[arg(long, default_value_t = 1, conflicts_with = "a_fraction")]
    pub a_weight: usize,
    /// Frequency weight as a fraction of n.
    #[arg(long)]
    pub a_fraction: Option<f64>,
    /// `first` or a 1-based index.
    #[arg(long, default_value = "first")]
    pub ell: String,
    /// Sample this many draws per point instead of using closed forms.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Write the slope fit as JSON here.
    #[arg(long)]
    pub fit_out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Final angles as JSON; defaults to `<out>.theta.json` when `--out` is set.
    #[arg(long)]
    pub theta_out: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct CircuitArgs {
    #[arg(long)]
    pub arch: String,
    /// JSON array of angles; drawn from `--init` when omitted.
    #[arg(long)]
    pub theta: Option<PathBuf>,
    #[arg(long, default_value = "uniform")]
    pub init: String,
    /// Number of samples (`sample` only).
    #[arg(long, default_value_t = 1000)]
    pub shots: usize,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct OracleVerifyArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest_path: PathBuf,
}
