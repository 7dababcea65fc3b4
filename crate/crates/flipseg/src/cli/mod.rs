//! The `flipseg` command line.
//!
//! Exit status: 0 on success, 1 when any case failed (the others are still
//! processed and written), 2 for usage and configuration errors, which are
//! all detected before any processing starts.

mod evaluate;
mod survival;
mod volumes;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use flipseg_core::phantom::PhantomPreset;
use flipseg_core::uncertainty::CertaintyFormula;
use flipseg_core::Axis;

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "flipseg", version, about = "Label-flip uncertainty post-processing for brain tumor segmentation")]
pub struct Cli {
    /// Configuration file (TOML); defaults to $FLIPSEG_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Standardize nonzero intensities to zero mean, unit variance.
    Standardize(StandardizeArgs),
    /// Fuse (p, q) prediction pairs into one probability volume.
    Ensemble(EnsembleArgs),
    /// Threshold, gate and repair WT/TC/ET probabilities into a label map.
    Refine(RefineArgs),
    /// Convert probabilities or flip probabilities into a 0-100 certainty map.
    Uncertainty(UncertaintyArgs),
    /// Per-case Dice / HD95 (and certainty curves) against ground truth.
    Evaluate(EvaluateArgs),
    /// Count disconnected tumors and cores in segmentations.
    Features(FeaturesArgs),
    /// Fit the fused survival model.
    SurvivalTrain(SurvivalTrainArgs),
    /// Predict survival days with a fitted model.
    SurvivalPredict(SurvivalPredictArgs),
    /// Cross-validate the fused survival model against an age-only model.
    SurvivalCv(SurvivalCvArgs),
    /// Write a synthetic tumor phantom.
    Phantom(PhantomArgs),
    /// Print the resolved configuration as TOML.
    Config(ConfigArgs),
}

#[derive(Debug, Args)]
pub struct StandardizeArgs {
    /// A volume, or a directory of `.nii` / `.nii.gz` volumes.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output file, or directory when the input is a directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// A probability volume and its flip-probability volume (repeatable).
    #[arg(long = "pred", num_args = 2, value_names = ["P", "Q"], required = true, action = clap::ArgAction::Append)]
    pub pred: Vec<PathBuf>,
    /// Flip augmentation axes; predictions then come in groups of the
    /// original followed by one prediction per axis.
    #[arg(long, value_delimiter = ',', value_enum)]
    pub flips: Vec<AxisArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum AxisArg {
    X,
    Y,
    Z,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
            AxisArg::Z => Axis::Z,
        }
    }
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub prob_wt: PathBuf,
    #[arg(long)]
    pub prob_tc: PathBuf,
    #[arg(long)]
    pub prob_et: PathBuf,
    /// BraTS-encoded label map (0, 1, 2, 4).
    #[arg(long)]
    pub out_labels: PathBuf,
    /// JSON audit of the refinement decisions.
    #[arg(long)]
    pub out_report: Option<PathBuf>,
    /// Overrides `refinement.min_component_size`.
    #[arg(long)]
    pub min_component_size: Option<usize>,
    /// Clip ET to TC and TC to WT.
    #[arg(long)]
    pub enforce_nesting: bool,
}

#[derive(Debug, Args)]
pub struct UncertaintyArgs {
    /// Ensembled probability (symmetric / negative-only formulas).
    #[arg(long, required_unless_present = "q", conflicts_with = "q")]
    pub prob: Option<PathBuf>,
    /// Flip probability (flip formula).
    #[arg(long)]
    pub q: Option<PathBuf>,
    /// Defaults to `uncertainty.formula`, or `flip` with `--q`.
    #[arg(long, value_enum)]
    pub formula: Option<FormulaArg>,
    /// uint8 certainty map, 100 = most certain.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum FormulaArg {
    Flip,
    Symmetric,
    NegativeOnly,
}

impl From<FormulaArg> for CertaintyFormula {
    fn from(f: FormulaArg) -> Self {
        match f {
            FormulaArg::Flip => CertaintyFormula::Flip,
            FormulaArg::Symmetric => CertaintyFormula::Symmetric,
            FormulaArg::NegativeOnly => CertaintyFormula::NegativeOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted label maps `<case>.nii.gz`, optionally with refinement
    /// reports `<case>_report.json`.
    #[arg(long)]
    pub pred_dir: PathBuf,
    /// Ground-truth label maps with the same file names.
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// Certainty maps `<case>_unc_{whole,core,enhance}.nii.gz`.
    #[arg(long)]
    pub cert_dir: Option<PathBuf>,
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    /// Label maps `<case>.nii.gz`.
    #[arg(long)]
    pub seg_dir: PathBuf,
    /// `case_id,age[,survival_days][,resection_status]`.
    #[arg(long)]
    pub clinical_csv: PathBuf,
    /// `case_id,age,n_tumors,n_cores,survival_days`.
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Debug, Args)]
pub struct SurvivalTrainArgs {
    #[arg(long)]
    pub features_csv: PathBuf,
    /// Overrides `survival.forest.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub model_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SurvivalPredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features_csv: PathBuf,
    /// `case_id,predicted_days`.
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Debug, Args)]
pub struct SurvivalCvArgs {
    #[arg(long)]
    pub features_csv: PathBuf,
    /// Overrides `survival.folds`.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Seeds both the fold assignment and the forest.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-fold CSV; printed to stdout when absent.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Defaults to `phantom.preset`.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Defaults to `phantom.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// File name prefix.
    #[arg(long, default_value = "phantom")]
    pub prefix: String,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum PresetArg {
    HggLike,
    DiffuseLggLike,
}

impl From<PresetArg> for PhantomPreset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::HggLike => PhantomPreset::HggLike,
            PresetArg::DiffuseLggLike => PhantomPreset::DiffuseLggLike,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Print the built-in defaults instead of the resolved file.
    #[arg(long)]
    pub default: bool,
}

/// An error with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub(crate) type CmdResult = std::result::Result<(), Failure>;

pub(crate) fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: e.into(),
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

/// Fail fast on any input path that does not exist.
pub(crate) fn require_exists<'a>(paths: impl IntoIterator<Item = &'a Path>) -> CmdResult {
    for p in paths {
        if !p.exists() {
            return Err(usage(anyhow::anyhow!("input not found: {}", p.display())));
        }
    }
    Ok(())
}

/// Create the parent directory of an output file.
pub(crate) fn prepare_output(path: &Path) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| usage(anyhow::anyhow!("cannot create {}: {e}", dir.display())))?;
    }
    Ok(())
}

/// Case name of a volume file: the file name without `.nii` / `.nii.gz`.
pub(crate) fn case_name(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .map(String::from)
}

/// Volume files directly inside `dir`, sorted by name.
pub(crate) fn list_volumes(dir: &Path) -> std::result::Result<Vec<PathBuf>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| usage(anyhow::anyhow!("cannot read {}: {e}", dir.display())))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && case_name(p).is_some())
        .collect();
    out.sort();
    Ok(out)
}

/// `<dir>/<stem>.nii.gz`, or `.nii` if only that exists.
pub(crate) fn find_volume(dir: &Path, stem: &str) -> Option<PathBuf> {
    [".nii.gz", ".nii"]
        .iter()
        .map(|ext| dir.join(format!("{stem}{ext}")))
        .find(|p| p.is_file())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

/// Parse `args` and run; returns the process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(cli.verbose);
    match execute(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

fn execute(cli: Cli) -> CmdResult {
    let (config, source) = Config::resolve(cli.config.as_deref()).map_err(usage)?;
    if let Some(p) = &source {
        log::info!("configuration from {}", p.display());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(usage)?;
    pool.install(|| match cli.command {
        Command::Standardize(a) => volumes::standardize(&a),
        Command::Ensemble(a) => volumes::ensemble(&a),
        Command::Refine(a) => volumes::refine(&a, &config),
        Command::Uncertainty(a) => volumes::uncertainty(&a, &config),
        Command::Phantom(a) => volumes::phantom(&a, &config),
        Command::Evaluate(a) => evaluate::evaluate(&a, &config),
        Command::Features(a) => survival::features(&a, &config),
        Command::SurvivalTrain(a) => survival::train(&a, &config),
        Command::SurvivalPredict(a) => survival::predict(&a),
        Command::SurvivalCv(a) => survival::cross_validate(&a, &config),
        Command::Config(a) => {
            let c = if a.default { Config::default() } else { config.clone() };
            print!("{}", c.to_toml());
            Ok(())
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn case_names() {
        assert_eq!(case_name(Path::new("a/b_01.nii.gz")).as_deref(), Some("b_01"));
        assert_eq!(case_name(Path::new("x.nii")).as_deref(), Some("x"));
        assert_eq!(case_name(Path::new("x.txt")), None);
    }
}
