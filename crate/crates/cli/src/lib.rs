//! Command-line front end: corpus synthesis, basis training, sampling orders,
//! reconstruction, error tables and codec comparison.
//!
//! Failures print one JSON object `{"error": {"code", "message"}}` on stderr
//! and exit with the code's status; nothing is written on failure except
//! artifacts already completed by a multi-file command.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use grd::reconstruct::ComponentCount;
use grd::GrdError;

mod commands;
pub mod output;

#[derive(Parser, Debug)]
#[command(name = "grd", version, about = "Generalized rate-distortion surface toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a seeded synthetic corpus as a dataset directory.
    Synth(SynthArgs),
    /// Train a basis from a dataset and print its explained-energy table.
    Train(TrainArgs),
    /// Compute a query order over grid cells.
    SampleOrder(SampleOrderArgs),
    /// Reconstruct a full grid from sparse samples.
    Reconstruct(ReconstructArgs),
    /// Reconstruction error tables over a dataset's test split.
    Eval(EvalArgs),
    /// Compare two codecs per content with ΔQ and ΔR.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AxesPreset {
    /// 100..9000 kbps by 100 × six resolutions.
    Default,
    /// 1000..9000 kbps by 1000 × six resolutions.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Eigen,
    Polynomial,
    Trigonometric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Trace,
    Logdet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    /// Greedy conditional-uncertainty order from the training covariance.
    Uncertainty,
    /// Log-uniform bitrates at one resolution.
    UniformLog,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FitterArg {
    Bd,
    Pchip,
    Logistic,
    Egrd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DrModeArg {
    Exact,
    Log,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    All,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Seed for surfaces and the train/test split.
    #[arg(long)]
    pub seed: u64,
    /// Number of surfaces.
    #[arg(long)]
    pub count: usize,
    #[arg(long, value_enum, default_value = "default")]
    pub axes: AxesPreset,
    /// Fraction of surfaces tagged `test` (rounded down).
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Output dataset directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory containing manifest.json.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "eigen")]
    pub kind: KindArg,
    /// Components to keep; defaults to every available one (eigen) or 20.
    #[arg(long)]
    pub n: Option<usize>,
    /// Which grids to train on.
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    /// Train a 1-D curve basis on the per-resolution RD curves (for `compare --fitter egrd`).
    #[arg(long)]
    pub per_resolution: bool,
    /// Output basis file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["basis", "dataset"]))]
pub struct SampleOrderArgs {
    /// Basis file; its component covariance drives the order.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// Dataset directory; the empirical covariance of its training split drives the order.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long, value_enum, default_value = "trace")]
    pub criterion: CriterionArg,
    /// Emit the log-uniform bitrate baseline at this resolution index instead.
    #[arg(long)]
    pub uniform_log_resolution: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub basis: PathBuf,
    /// CSV with header bitrate_kbps,resolution_diag,quality.
    #[arg(long)]
    pub samples: PathBuf,
    /// Components: a number or `match` (= number of samples).
    #[arg(long, value_parser = parse_components, default_value = "match")]
    pub n: ComponentCount,
    /// Plain least squares without monotonicity constraints.
    #[arg(long)]
    pub no_constraints: bool,
    /// Output grid file.
    #[arg(long)]
    pub out: PathBuf,
    /// Diagnostics file; defaults to `<out>` with extension `diagnostics.json`.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "eigen")]
    pub kind: KindArg,
    #[arg(long, value_enum, default_value = "uncertainty")]
    pub order: OrderArg,
    #[arg(long, value_enum, default_value = "trace")]
    pub criterion: CriterionArg,
    /// Resolution index for `--order uniform-log`; defaults to the highest.
    #[arg(long)]
    pub resolution_index: Option<usize>,
    /// Sample counts S, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub s: Vec<usize>,
    /// Components: a number or `match`.
    #[arg(long, value_parser = parse_components, default_value = "match")]
    pub n: ComponentCount,
    /// Components trained per split; defaults to all available (eigen) or the largest needed.
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub no_constraints: bool,
    /// Random train/test splits; 0 uses the manifest's split tags.
    #[arg(long, default_value_t = 0)]
    pub splits: usize,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Test fraction for random splits.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Evaluate on the training grids themselves.
    #[arg(long)]
    pub test_on_train: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// CSV with header content_id,codec,bitrate_kbps,quality and two codecs.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, value_enum, default_value = "bd")]
    pub fitter: FitterArg,
    #[arg(long, value_enum, default_value = "log")]
    pub dr_mode: DrModeArg,
    /// Common kbps range `lo,hi` instead of per-content overlaps.
    #[arg(long, value_parser = parse_range)]
    pub global_range: Option<(f64, f64)>,
    /// Curve basis from `train --per-resolution`; required by the egrd fitter.
    #[arg(long)]
    pub basis: Option<PathBuf>,
    /// Codec treated as the anchor A; defaults to the first one in the file.
    #[arg(long)]
    pub anchor: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: FormatArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-content curve CSVs.
    #[arg(long)]
    pub curves_dir: Option<PathBuf>,
}

fn parse_components(s: &str) -> Result<ComponentCount, String> {
    if s == "match" {
        return Ok(ComponentCount::MatchSamples);
    }
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(ComponentCount::Fixed(n)),
        _ => Err(format!("expected a positive integer or `match`, got `{s}`")),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [lo, hi] = parts.as_slice() else {
        return Err(format!("expected `lo,hi`, got `{s}`"));
    };
    let lo: f64 = lo.parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi.parse().map_err(|_| format!("bad number `{hi}`"))?;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(format!("range must satisfy 0 < lo < hi, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Grd(GrdError),
}

impl CliError {
    /// Stable machine-readable code and process exit status.
    pub fn code(&self) -> (&'static str, i32) {
        match self {
            CliError::Usage(_) => ("USAGE", 2),
            CliError::Grd(e) => match e {
                GrdError::Io(_) => ("IO_ERROR", 3),
                GrdError::Json(_) | GrdError::Csv(_) | GrdError::Schema(_) | GrdError::MalformedGrid(_) => {
                    ("SCHEMA_ERROR", 4)
                }
                GrdError::InvalidAxes(_) | GrdError::AxisMismatch(_) | GrdError::DimensionMismatch { .. } => {
                    ("AXIS_ERROR", 5)
                }
                GrdError::InvalidSamples(_) | GrdError::InvalidArgument(_) | GrdError::OutOfDomain { .. } => {
                    ("INVALID_INPUT", 6)
                }
                GrdError::RankDeficient { .. } | GrdError::Numerical(_) => ("NUMERICAL_ERROR", 7),
                GrdError::FitFailed(_) => ("FIT_FAILED", 8),
                GrdError::NoOverlap(_) => ("NO_OVERLAP", 9),
            },
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Grd(e) => e.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        let (code, _) = self.code();
        serde_json::json!({ "error": { "code": code, "message": self.message() } }).to_string()
    }
}

impl From<GrdError> for CliError {
    fn from(e: GrdError) -> Self {
        CliError::Grd(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Grd(GrdError::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Grd(GrdError::Json(e))
    }
}

/// Parses `argv` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{}", e.render());
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.to_json());
            return err.code().1;
        }
    };
    match commands::execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code().1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_argument() {
        assert_eq!(parse_components("match"), Ok(ComponentCount::MatchSamples));
        assert_eq!(parse_components("8"), Ok(ComponentCount::Fixed(8)));
        assert!(parse_components("0").is_err());
        assert!(parse_components("eight").is_err());
    }

    #[test]
    fn range_argument() {
        assert_eq!(parse_range("500, 4000"), Ok((500.0, 4000.0)));
        assert!(parse_range("4000,500").is_err());
        assert!(parse_range("1,2,3").is_err());
    }

    #[test]
    fn error_codes_are_distinct() {
        let errs = [
            CliError::Usage(String::new()),
            GrdError::Io(std::io::Error::other("x")).into(),
            GrdError::Schema(String::new()).into(),
            GrdError::AxisMismatch(String::new()).into(),
            GrdError::InvalidArgument(String::new()).into(),
            GrdError::Numerical(String::new()).into(),
            GrdError::FitFailed(String::new()).into(),
            GrdError::NoOverlap(String::new()).into(),
        ];
        let mut codes: Vec<_> = errs.iter().map(|e| e.code()).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), errs.len());
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
