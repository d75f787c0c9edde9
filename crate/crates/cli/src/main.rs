use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "absrank", version, about = "Absolute-rank benchmarking and NIIA diagnostics")]
struct Cli {
    /// Directory for every artifact a run writes
    #[arg(long, env = "ABSRANK_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// How absolute ranks are shown in printed reports
    #[arg(long, value_enum, default_value_t = Display::Percent)]
    display: Display,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Display {
    Percent,
    Fraction,
}

impl Display {
    pub fn rank(self, v: f64) -> String {
        match self {
            Display::Percent => format!("{:.4}%", 100.0 * v),
            Display::Fraction => format!("{v:.6}"),
        }
    }
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Write the two synthetic paradox datasets
    GenNiia,
    /// Friedman test with Bonferroni-Dunn critical difference
    Npht(NphtArgs),
    /// Bradley-Terry pairwise probabilities
    Bayes(BayesArgs),
    /// Sobol-sample a problem and build its absolute-rank function
    Sample(SampleArgs),
    /// Absolute-rank a performance matrix with per-problem CDFs
    Absrank(AbsrankArgs),
    /// Score sampling ranges around the optimum
    SelectDelta(SelectDeltaArgs),
    /// Look for verdicts that flip when algorithms are removed
    NiiaCheck(NiiaArgs),
    /// Tabulate an absolute-rank function for plotting
    CdfCurve(CurveArgs),
    /// Re-run the command recorded in a manifest
    #[serde(skip)]
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenNiia => "gen-niia",
            Command::Npht(_) => "npht",
            Command::Bayes(_) => "bayes",
            Command::Sample(_) => "sample",
            Command::Absrank(_) => "absrank",
            Command::SelectDelta(_) => "select-delta",
            Command::NiiaCheck(_) => "niia-check",
            Command::CdfCurve(_) => "cdf-curve",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MatrixArgs {
    /// Performance matrix CSV: header `algorithm,<problem>,...`
    pub csv: PathBuf,
    /// Larger metric values are better
    #[arg(long)]
    pub higher_is_better: bool,
    /// Restrict the analysis to these algorithms
    #[arg(long, value_delimiter = ',')]
    pub keep: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair(pub String, pub String);

fn parse_pair(s: &str) -> Result<Pair, String> {
    match s.split(',').map(str::trim).collect::<Vec<_>>()[..] {
        [a, b] if !a.is_empty() && !b.is_empty() => Ok(Pair(a.to_owned(), b.to_owned())),
        _ => Err(format!("expected two labels as A,B, got {s:?}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdConvention {
    AllPairsOneSided,
    ControlTwoSided,
    ControlOneSided,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct NphtArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub matrix: MatrixArgs,
    /// Pair to compare, as A,B (repeatable)
    #[arg(long = "pairs", value_parser = parse_pair, required = true)]
    pub pairs: Vec<Pair>,
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = CdConvention::AllPairsOneSided)]
    pub convention: CdConvention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaScale {
    GeometricMean,
    SumToOne,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct FitArgs {
    /// Pseudo-wins added to every pair
    #[arg(long, default_value_t = 0.0)]
    pub prior_weight: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = ThetaScale::GeometricMean)]
    pub normalization: ThetaScale,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BayesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub matrix: MatrixArgs,
    /// Pair to compare, as A,B (repeatable)
    #[arg(long = "pairs", value_parser = parse_pair, required = true)]
    pub pairs: Vec<Pair>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundsArg {
    /// Convolution when the CDF has bounded support, normal-approx otherwise
    Auto,
    Convolution,
    NormalApprox,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SampleArgs {
    /// Problem descriptor JSON
    pub problem: PathBuf,
    /// Sampling box as lo:hi (all coordinates) or lo:hi,lo:hi,... (defaults to the domain)
    #[arg(long, allow_hyphen_values = true, conflicts_with = "delta")]
    pub region: Option<String>,
    /// Sample the cube of half-width delta around the optimum instead
    #[arg(long)]
    pub delta: Option<f64>,
    /// Draw 2^log2n Sobol points
    #[arg(long, default_value_t = absrank_core::sampling::FINE_LOG2N)]
    pub log2n: u32,
    #[arg(long, default_value_t = 1)]
    pub skip: u64,
    /// Lower bound of the function on the region (defaults to the optimum value when it lies inside)
    #[arg(long, allow_hyphen_values = true)]
    pub known_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub known_max: Option<f64>,
    /// How the CDF is lifted to the mean over rounds
    #[arg(long, value_enum, default_value_t = RoundsArg::Auto)]
    pub rounds_mode: RoundsArg,
    #[arg(long, default_value_t = 4096)]
    pub grid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregate {
    Mean,
    Median,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AbsrankArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub matrix: MatrixArgs,
    /// Directory holding <problem>.absrank.json for every problem
    #[arg(long)]
    pub cdf_dir: PathBuf,
    /// Aggregation of absolute ranks across problems
    #[arg(long, value_enum, default_value_t = Aggregate::Mean)]
    pub aggregate: Aggregate,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SelectDeltaArgs {
    /// Problem descriptor JSON files
    #[arg(required = true)]
    pub problems: Vec<PathBuf>,
    /// Metric matrix CSV with one column per problem label
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5")]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = absrank_core::sampling::COARSE_LOG2N)]
    pub log2n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    AvgRank,
    AvgRankGated,
    BradleyTerry,
    Absolute,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct NiiaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub matrix: MatrixArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::AvgRank)]
    pub method: MethodArg,
    /// Pair whose verdict is tracked, as A,B
    #[arg(long, value_parser = parse_pair)]
    pub pair: Pair,
    /// Try every way of dropping k other algorithms (the default, with k = 1)
    #[arg(long, conflicts_with_all = ["all_subsets", "subset"])]
    pub leave_k_out: Option<usize>,
    /// Try every subset containing the pair
    #[arg(long, conflicts_with = "subset")]
    pub all_subsets: bool,
    /// Largest matrix for which all subsets are tried
    #[arg(long, default_value_t = absrank_core::niia::DEFAULT_SUBSET_LIMIT)]
    pub limit: usize,
    /// Explicit subset as comma-separated labels (repeatable)
    #[arg(long)]
    pub subset: Vec<String>,
    /// Directory of per-problem CDFs, for the absolute method
    #[arg(long)]
    pub cdf_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0.001)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = CdConvention::AllPairsOneSided)]
    pub convention: CdConvention,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CurveArgs {
    /// Absolute-rank function file
    pub cdf: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub points: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<absrank_core::Error> for Failure {
    fn from(e: absrank_core::Error) -> Self {
        let code = if e.is_capability() { 4 } else { 3 };
        Self { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 3, msg: e.to_string() }
    }
}

/// Writes to stdout; a reader that went away early is not an error.
pub fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(args: Vec<OsString>) -> Result<(), Failure> {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code() as u8;
            if code == 0 {
                return emit(&e.to_string());
            }
            return Err(Failure { code, msg: e.to_string().trim_end().to_owned() });
        }
    };
    commands::execute(cli.command, cli.display, &cli.out_dir)
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("absrank: {f}");
            ExitCode::from(f.code)
        }
    }
}
