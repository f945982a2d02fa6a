//! Command-line entry point.
//!
//! Every command is deterministic given its inputs, config and seed. Output
//! files are written atomically (temp file + rename) into the output
//! directory, next to a `resolved_config.toml` holding the effective
//! configuration.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | bad command line |
//! | 3 | file could not be read or written |
//! | 4 | malformed input file (embeddings, labels, metadata, refs, boxes) |
//! | 5 | invalid configuration, manifest or criteria |
//! | 6 | inconsistent data (split overlap, empty join, duplicate or missing ids) |
//! | 7 | numerical failure (singular system, degenerate mean or range, nothing to score) |

mod commands;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coloc::ColocError;
use crate::detect_eval::DetectError;
use crate::embed_store::EmbedError;
use crate::probes::{ProbeConfig, ProbeError};
use crate::pruning::{PruneConfig, PruneError};
use crate::registry::{ColocRef, RegistryError};
use crate::simmap::SimmapError;

pub const DEFAULT_SEED: u64 = 42;
pub const OUT_DIR_ENV: &str = "OSWB_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_INPUT: i32 = 4;
pub const EXIT_CONFIG: i32 = 5;
pub const EXIT_DATA: i32 = 6;
pub const EXIT_NUMERIC: i32 = 7;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    IoOther(std::io::Error),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::IoOther(_) => EXIT_IO,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        let msg = e.to_string();
        match e {
            EmbedError::Io(source) => CliError::IoOther(source),
            EmbedError::EmptyJoin | EmbedError::DuplicateImageId(_) | EmbedError::MissingMeta(_) => CliError::Data(msg),
            EmbedError::ZeroVector => CliError::Numeric(msg),
            _ => CliError::Input(msg),
        }
    }
}

impl From<ColocError> for CliError {
    fn from(e: ColocError) -> Self {
        let msg = e.to_string();
        match e {
            ColocError::InvalidCriteria(_) | ColocError::TargetMismatch { .. } => CliError::Config(msg),
            ColocError::DegenerateDirectionMean { .. } => CliError::Numeric(msg),
            ColocError::RefParse { .. } | ColocError::Csv(_) => CliError::Input(msg),
            ColocError::Io(source) => CliError::IoOther(source),
        }
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        let msg = e.to_string();
        match e {
            ProbeError::InvalidConfig(_) | ProbeError::LabelKindMismatch { .. } => CliError::Config(msg),
            ProbeError::SplitOverlap(_) | ProbeError::EmptyTrainSet | ProbeError::EmptyTestSet | ProbeError::DimMismatch { .. } => {
                CliError::Data(msg)
            }
            _ => CliError::Numeric(msg),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        let msg = e.to_string();
        match e {
            DetectError::ThresholdOutOfRange(_) => CliError::Config(msg),
            DetectError::EmptyEvaluation => CliError::Numeric(msg),
            _ => CliError::Input(msg),
        }
    }
}

impl From<PruneError> for CliError {
    fn from(e: PruneError) -> Self {
        let msg = e.to_string();
        match e {
            PruneError::TargetTooLarge { .. } | PruneError::InvalidConfig(_) | PruneError::IndexOutOfRange(_) => CliError::Config(msg),
            PruneError::ZeroVector { .. } => CliError::Numeric(msg),
            PruneError::SizeMismatch { .. } | PruneError::EmptySelection => CliError::Data(msg),
            PruneError::Io(source) => CliError::IoOther(source),
        }
    }
}

impl From<SimmapError> for CliError {
    fn from(e: SimmapError) -> Self {
        let msg = e.to_string();
        match e {
            SimmapError::RefOutOfBounds { .. } => CliError::Config(msg),
            SimmapError::ZeroVector | SimmapError::DegenerateRange => CliError::Numeric(msg),
            SimmapError::Parse(_) | SimmapError::DimMismatch(..) => CliError::Input(msg),
        }
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        let msg = e.to_string();
        match e {
            RegistryError::DuplicateId(_) => CliError::Data(msg),
            RegistryError::InvalidReport(_) => CliError::Numeric(msg),
            _ => CliError::Config(msg),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    JsonLines,
}

#[derive(Debug, Parser)]
#[command(name = "oswb", version, about = "Evaluate ocean SAR embeddings: probes, matchups, detection, pruning, similarity maps")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice [default: 42].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "oswb-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an embedding file against labels (and metadata) and print its digest.
    Ingest(commands::IngestArgs),
    /// Build a matchup table between image metadata and reference records.
    Colocate(commands::ColocateArgs),
    /// Score a dataset on a benchmark manifest.
    Eval(commands::EvalArgs),
    /// Select a diverse subset with k-center greedy.
    Prune(commands::PruneArgs),
    /// Export a patch similarity map for one image.
    Simmap(commands::SimmapArgs),
    /// Merge metric reports into a leaderboard.
    Report(commands::ReportArgs),
}

/// Optional sections of the `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub probe: Option<ProbeConfig>,
    pub coloc: Option<ColocRef>,
    pub prune: Option<PruneConfig>,
    pub simmap: Option<commands::SimmapConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub(crate) struct Context {
    pub seed: u64,
    pub format: OutputFormat,
    pub out_dir: PathBuf,
    pub config: RunConfig,
}

impl Context {
    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out(name);
        write_atomic(&path, bytes)?;
        Ok(path)
    }
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("global thread pool already initialized");
        }
    }
    let config = match &cli.global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ctx = Context {
        seed: cli.global.seed.or(config.seed).unwrap_or(DEFAULT_SEED),
        format: cli.global.format,
        out_dir: cli.global.out_dir.clone(),
        config,
    };
    match cli.command {
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::Colocate(a) => commands::colocate(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Prune(a) => commands::prune(&ctx, a),
        Command::Simmap(a) => commands::simmap(&ctx, a),
        Command::Report(a) => commands::report(&ctx, a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
