//! Command-line harness: data generation, order selection, criterion comparison tables
//! and run manifests for exact replay.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ldsmdl::criteria::CriterionName;
use ldsmdl::datagen::{
    narma_generate, preprocess_center_trim, random_stable_lds, NarmaOrder, NarmaSpec, RandomLdsConfig,
};
use ldsmdl::em::{derive_seed, EmConfig, FitMode};
use ldsmdl::model::simulate;
use ldsmdl::selection::{
    annihilation_search, grid_search, sweep_rows, write_sweep_csv, MdlFit, SelectionConfig, SelectionTrace,
};
use ldsmdl::{LdsError, ModelOrderBounds, SequenceData};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable that overrides any seed given on the command line or in a config.
pub const SEED_ENV: &str = "LDSMDL_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("fitting failed: {0}")]
    Fitting(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Generation(_) => 3,
            CliError::Fitting(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Errors while reading inputs: unreadable files are I/O failures, malformed ones config errors.
fn input_err(path: &Path, e: LdsError) -> CliError {
    match e {
        LdsError::Io(_) => io_err(path, e),
        other => CliError::Config(format!("{}: {other}", path.display())),
    }
}

fn fit_err(e: LdsError) -> CliError {
    match e {
        LdsError::Io(_) => CliError::Io(e.to_string()),
        other => CliError::Fitting(other.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(name = "ldsmdl", version, about = "Fit linear dynamical systems and select their latent dimension")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sequence from a JSON generator config.
    Simulate(SimulateArgs),
    /// Select the latent dimension of a sequence.
    Select(SelectArgs),
    /// Score every order under all criteria and print a normalised comparison table.
    Compare(CompareArgs),
    /// Re-run a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the generating parameters (LDS generator only).
    #[arg(long)]
    pub params_out: Option<PathBuf>,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Annihilate,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionArg {
    Aic,
    Bic,
    Fia,
    Mme,
    Mdl,
}

impl From<CriterionArg> for CriterionName {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Aic => CriterionName::Aic,
            CriterionArg::Bic => CriterionName::Bic,
            CriterionArg::Fia => CriterionName::Fia,
            CriterionArg::Mme => CriterionName::Mme,
            CriterionArg::Mdl => CriterionName::Mdl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdlFitArg {
    Marginal,
    Smoothed,
}

/// Fitting options shared by `select` and `compare`.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[arg(long, default_value_t = 2)]
    pub dmin: usize,
    #[arg(long, default_value_t = 12)]
    pub dmax: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Fit delay embeddings with an identity observation matrix (scalar input only).
    #[arg(long)]
    pub observable: bool,
    /// Skip the Fisher-information term; FIA is then omitted.
    #[arg(long)]
    pub no_fisher: bool,
    #[arg(long, value_enum, default_value_t = MdlFitArg::Marginal)]
    pub mdl_fit: MdlFitArg,
}

impl FitArgs {
    fn selection_config(&self) -> Result<(ModelOrderBounds, SelectionConfig), CliError> {
        let bounds = ModelOrderBounds::new(self.dmin, self.dmax).map_err(|e| CliError::Config(e.to_string()))?;
        let em = EmConfig {
            eps: self.eps,
            max_iters: self.max_iters,
            n_restarts: self.restarts,
            seed: self.seed,
            mode: if self.observable { FitMode::ObservableState } else { FitMode::Latent },
        };
        em.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let mut cfg = SelectionConfig::new(em);
        cfg.fisher = !self.no_fisher;
        cfg.mdl_fit = match self.mdl_fit {
            MdlFitArg::Marginal => MdlFit::Marginal,
            MdlFitArg::Smoothed => MdlFit::SmoothedObservation,
        };
        Ok((bounds, cfg))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SelectArgs {
    /// Headerless CSV sequence.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = SearchMode::Annihilate)]
    pub mode: SearchMode,
    #[arg(long, value_enum, default_value_t = CriterionArg::Mdl)]
    pub criterion: CriterionArg,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    /// Evaluate every order in annihilation mode instead of stopping once the
    /// description length rises.
    #[arg(long)]
    pub no_early_stop: bool,
    /// Selection trace JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Sweep table CSV; defaults to `<out>.sweep.csv`.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CompareArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
    /// Comparison table CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs into this directory (same file names) instead of their recorded paths.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Generator configuration read by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    Lds {
        d: usize,
        #[serde(default = "one")]
        d_out: usize,
        length: usize,
        #[serde(default)]
        burn_in: usize,
        seed: u64,
        #[serde(default = "unit_range")]
        entry_range: (f64, f64),
        #[serde(default)]
        iw_dof: Option<usize>,
    },
    Narma {
        order: NarmaOrder,
        length: usize,
        seed: u64,
        #[serde(default = "input_range")]
        input_range: (f64, f64),
        /// Centre and drop samples outside these bounds.
        #[serde(default)]
        trim: Option<(f64, f64)>,
    },
}

fn one() -> usize {
    1
}

fn unit_range() -> (f64, f64) {
    (-1.0, 1.0)
}

fn input_range() -> (f64, f64) {
    (0.0, 0.5)
}

impl GeneratorConfig {
    pub fn seed(&self) -> u64 {
        match self {
            GeneratorConfig::Lds { seed, .. } | GeneratorConfig::Narma { seed, .. } => *seed,
        }
    }

    fn with_seed(mut self, new: u64) -> Self {
        match &mut self {
            GeneratorConfig::Lds { seed, .. } | GeneratorConfig::Narma { seed, .. } => *seed = new,
        }
        self
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_snapshot: serde_json::Value,
    pub master_seed: u64,
    pub outputs: Vec<PathBuf>,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SimulateJob {
    config: GeneratorConfig,
    out: PathBuf,
    params_out: Option<PathBuf>,
}

/// What a successful command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    /// Text for standard output.
    pub stdout: String,
    pub manifest: PathBuf,
    pub outputs: Vec<PathBuf>,
}

fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn default_sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(path, text.as_bytes())
}

fn to_snapshot<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("configs serialise to JSON")
}

pub fn run(cli: Cli) -> Result<RunOutput, CliError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Select(args) => cmd_select(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Replay(args) => cmd_replay(&args),
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunOutput, CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| io_err(&args.config, e))?;
    let mut config: GeneratorConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = seed_override()? {
        config = config.with_seed(seed);
    }
    let job = SimulateJob {
        config,
        out: args.out.clone(),
        params_out: args.params_out.clone(),
    };
    let manifest = args.manifest.clone().unwrap_or_else(|| default_sidecar(&args.out, ".manifest.json"));
    run_simulate(&job, &manifest)
}

fn generate(config: &GeneratorConfig) -> Result<(SequenceData, Option<ldsmdl::LdsParams>), CliError> {
    let gen = |e: LdsError| CliError::Generation(e.to_string());
    match config {
        GeneratorConfig::Lds {
            d,
            d_out,
            length,
            burn_in,
            seed,
            entry_range,
            iw_dof,
        } => {
            let sys = RandomLdsConfig {
                d: *d,
                d_out: *d_out,
                entry_range: *entry_range,
                iw_dof: *iw_dof,
                seed: derive_seed(*seed, 0),
            };
            sys.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if *length < 1 {
                return Err(CliError::Config("length must be at least 1".into()));
            }
            let params = random_stable_lds(&sys).map_err(gen)?;
            let data = simulate(&params, *length, *burn_in, derive_seed(*seed, 1)).map_err(gen)?;
            Ok((data.with_seed(*seed), Some(params)))
        }
        GeneratorConfig::Narma {
            order,
            length,
            seed,
            input_range,
            trim,
        } => {
            let spec = NarmaSpec {
                order: *order,
                length: *length,
                input_range: *input_range,
                seed: *seed,
            };
            spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let mut data = narma_generate(&spec).map_err(gen)?;
            if let Some(bounds) = trim {
                data = preprocess_center_trim(&data, *bounds).map_err(gen)?;
            }
            Ok((data, None))
        }
    }
}

fn run_simulate(job: &SimulateJob, manifest_path: &Path) -> Result<RunOutput, CliError> {
    let started_at = now();
    let (data, params) = generate(&job.config)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&job.out, &buf)?;
    let mut outputs = vec![job.out.clone()];
    if let Some(path) = &job.params_out {
        let params = params.ok_or_else(|| CliError::Config("params_out needs the lds generator".into()))?;
        let text = params.to_json().map_err(|e| CliError::Io(e.to_string()))?;
        write_file(path, text.as_bytes())?;
        outputs.push(path.clone());
    }
    let manifest = RunManifest {
        command: "simulate".into(),
        config_snapshot: to_snapshot(job),
        master_seed: job.config.seed(),
        outputs: outputs.clone(),
        started_at,
        finished_at: now(),
    };
    write_manifest(manifest_path, &manifest)?;
    Ok(RunOutput {
        stdout: format!("wrote {} rows to {}\n", data.len(), job.out.display()),
        manifest: manifest_path.to_path_buf(),
        outputs,
    })
}

fn read_input(path: &Path) -> Result<SequenceData, CliError> {
    SequenceData::read_csv_file(path).map_err(|e| input_err(path, e))
}

pub fn cmd_select(mut args: SelectArgs) -> Result<RunOutput, CliError> {
    if let Some(seed) = seed_override()? {
        args.fit.seed = seed;
    }
    if args.sweep.is_none() {
        args.sweep = Some(default_sidecar(&args.out, ".sweep.csv"));
    }
    let manifest = args.manifest.clone().unwrap_or_else(|| default_sidecar(&args.out, ".manifest.json"));
    run_select(&args, &manifest)
}

fn run_select(args: &SelectArgs, manifest_path: &Path) -> Result<RunOutput, CliError> {
    let started_at = now();
    let (bounds, mut cfg) = args.fit.selection_config()?;
    cfg.early_stop = !args.no_early_stop;
    let data = read_input(&args.input)?;
    let trace = match args.mode {
        SearchMode::Annihilate => annihilation_search(&data, &bounds, &cfg),
        SearchMode::Grid => grid_search(&data, &bounds, &cfg, args.criterion.into()),
    }
    .map_err(fit_err)?;

    let json = trace.to_json().map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&args.out, json.as_bytes())?;
    let sweep = args.sweep.clone().expect("sweep path resolved");
    let mut buf = Vec::new();
    write_sweep_csv(&trace, &mut buf).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&sweep, &buf)?;

    let outputs = vec![args.out.clone(), sweep];
    let manifest = RunManifest {
        command: "select".into(),
        config_snapshot: to_snapshot(args),
        master_seed: args.fit.seed,
        outputs: outputs.clone(),
        started_at,
        finished_at: now(),
    };
    write_manifest(manifest_path, &manifest)?;
    Ok(RunOutput {
        stdout: format!("{}\n", trace.chosen_order),
        manifest: manifest_path.to_path_buf(),
        outputs,
    })
}

pub fn cmd_compare(mut args: CompareArgs) -> Result<RunOutput, CliError> {
    if let Some(seed) = seed_override()? {
        args.fit.seed = seed;
    }
    let manifest = args.manifest.clone().unwrap_or_else(|| default_sidecar(&args.out, ".manifest.json"));
    run_compare(&args, &manifest)
}

/// Comparison table: one row per order with `normalized (raw)` cells, then an argmin row.
pub fn comparison_table(trace: &SelectionTrace) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut header = vec!["order".to_string()];
    header.extend(CriterionName::ALL.iter().map(|c| c.to_string()));
    rows.push(header);
    for row in sweep_rows(trace) {
        let mut cells = vec![row.order.to_string()];
        for (norm, raw) in row.normalized.iter().zip(&row.raw) {
            cells.push(match (norm, raw) {
                (Some(n), Some(r)) => format!("{n:.4} ({r:.4})"),
                _ => "NA".to_string(),
            });
        }
        rows.push(cells);
    }
    let mut argmins = vec!["argmin".to_string()];
    argmins.extend(
        CriterionName::ALL
            .iter()
            .map(|&c| trace.argmin(c).map_or_else(|| "NA".to_string(), |o| o.to_string())),
    );
    rows.push(argmins);
    rows
}

fn run_compare(args: &CompareArgs, manifest_path: &Path) -> Result<RunOutput, CliError> {
    let started_at = now();
    let (bounds, cfg) = args.fit.selection_config()?;
    let data = read_input(&args.input)?;
    let trace = grid_search(&data, &bounds, &cfg, CriterionName::Mdl).map_err(fit_err)?;
    let table = comparison_table(&trace);

    let mut text = String::new();
    for row in &table {
        let quoted: Vec<String> = row.iter().map(|c| format!("\"{c}\"")).collect();
        text.push_str(&quoted.join(","));
        text.push('\n');
    }
    write_file(&args.out, text.as_bytes())?;

    let mut pretty = String::new();
    for row in &table {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>22}")).collect();
        pretty.push_str(cells.join("").trim_start());
        pretty.push('\n');
    }
    let outputs = vec![args.out.clone()];
    let manifest = RunManifest {
        command: "compare".into(),
        config_snapshot: to_snapshot(args),
        master_seed: args.fit.seed,
        outputs: outputs.clone(),
        started_at,
        finished_at: now(),
    };
    write_manifest(manifest_path, &manifest)?;
    Ok(RunOutput {
        stdout: pretty,
        manifest: manifest_path.to_path_buf(),
        outputs,
    })
}

fn redirect(path: &Path, dir: Option<&Path>) -> PathBuf {
    match (dir, path.file_name()) {
        (Some(d), Some(name)) => d.join(name),
        _ => path.to_path_buf(),
    }
}

/// Re-runs a recorded command with its recorded configuration and seed; the environment
/// seed override is ignored so the recorded seed wins.
pub fn cmd_replay(args: &ReplayArgs) -> Result<RunOutput, CliError> {
    let text = fs::read_to_string(&args.manifest).map_err(|e| io_err(&args.manifest, e))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.manifest.display())))?;
    let dir = args.out_dir.as_deref();
    let manifest_out = redirect(&args.manifest, dir);
    let bad = |e: serde_json::Error| CliError::Config(format!("manifest snapshot: {e}"));
    match manifest.command.as_str() {
        "simulate" => {
            let mut job: SimulateJob = serde_json::from_value(manifest.config_snapshot).map_err(bad)?;
            job.out = redirect(&job.out, dir);
            job.params_out = job.params_out.map(|p| redirect(&p, dir));
            run_simulate(&job, &manifest_out)
        }
        "select" => {
            let mut job: SelectArgs = serde_json::from_value(manifest.config_snapshot).map_err(bad)?;
            job.out = redirect(&job.out, dir);
            job.sweep = job.sweep.map(|p| redirect(&p, dir));
            run_select(&job, &manifest_out)
        }
        "compare" => {
            let mut job: CompareArgs = serde_json::from_value(manifest.config_snapshot).map_err(bad)?;
            job.out = redirect(&job.out, dir);
            run_compare(&job, &manifest_out)
        }
        other => Err(CliError::Config(format!("unknown command {other:?} in manifest"))),
    }
}
