//! Experiment configuration: a declarative TOML or JSON file merged with
//! command-line overrides, then resolved against the defaults.
//!
//! Resolution order per field is flag > config file > default. The default
//! training budget is the desk profile (2000 epochs per stage); `--fidelity`
//! raises both budgets to 10000 unless an explicit epoch count overrides it.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use fafcnn_core::faim::SparseMode;
use fafcnn_core::forest::{GbdtConfig, RfConfig};
use fafcnn_core::trainer::{FusionHead, StageOneConfig, StageTwoConfig};

use crate::variants::Variant;

pub const DESK_EPOCHS: usize = 2000;
pub const FIDELITY_EPOCHS: usize = 10_000;
pub const DEFAULT_SWEEP_DELTAS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// A configuration problem: bad file, bad flag value, or a violated
/// invariant. Distinct from data and training errors for exit-code mapping.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Fully resolved settings for one run.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub label_column: String,
    pub positive_label: Option<String>,
    pub delta: f64,
    pub perturb_seed: u64,
    pub seeds: Vec<u64>,
    pub variant: Variant,
    pub output_dir: PathBuf,
    /// Embedding size of the representation space shared by every branch.
    pub p: usize,
    pub gbdt: GbdtConfig,
    /// Forest settings for the rf_no_fam variant; the bootstrap seed is
    /// derived per run seed and ignores this value.
    pub rf: RfConfig,
    pub stage1: StageOneConfig,
    pub stage2: StageTwoConfig,
    /// Perturbation ratios visited by `sweep`.
    pub deltas: Vec<f64>,
    /// Evaluation head; `None` picks the variant's default.
    pub eval_head: Option<FusionHead>,
}

// Mirror structs with every field optional, so a config file can set any
// subset and flags can override single values.

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGbdt {
    n_trees: Option<usize>,
    max_depth: Option<usize>,
    min_samples_leaf: Option<usize>,
    shrinkage: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRf {
    n_trees: Option<usize>,
    max_depth: Option<usize>,
    min_samples_leaf: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileStage1 {
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    epsilon: Option<f64>,
    alpha: Option<f64>,
    sparse_mode: Option<SparseMode>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileStage2 {
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    beta: Option<f64>,
    d_steps_per_epoch: Option<usize>,
    g_steps_per_epoch: Option<usize>,
    clip_norm: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    dataset: Option<PathBuf>,
    label_column: Option<String>,
    positive_label: Option<String>,
    delta: Option<f64>,
    perturb_seed: Option<u64>,
    seeds: Option<Vec<u64>>,
    variant: Option<Variant>,
    output_dir: Option<PathBuf>,
    fidelity: Option<bool>,
    p: Option<usize>,
    deltas: Option<Vec<f64>>,
    eval_head: Option<FusionHead>,
    #[serde(default)]
    gbdt: FileGbdt,
    #[serde(default)]
    rf: FileRf,
    #[serde(default)]
    stage1: FileStage1,
    #[serde(default)]
    stage2: FileStage2,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
        if is_json {
            serde_json::from_str(&text)
                .map_err(|e| ConfigError(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
        }
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Configuration file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Raw dataset CSV.
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Header name of the label column.
    #[arg(long, global = true)]
    pub label_column: Option<String>,
    /// Raw label token mapped to class 1.
    #[arg(long, global = true)]
    pub positive_label: Option<String>,
    /// Fraction of rows perturbed during preparation.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    pub perturb_seed: Option<u64>,
    /// Comma-separated run seeds, e.g. "0,1,2".
    #[arg(long, global = true, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, global = true, value_enum)]
    pub variant: Option<Variant>,
    /// Directory all artifacts are written under.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Train with the 10000-epoch budget instead of the desk-scale 2000.
    #[arg(long, global = true)]
    pub fidelity: bool,
    /// Embedding size p.
    #[arg(long, global = true)]
    pub p: Option<usize>,
    #[arg(long, global = true)]
    pub stage1_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub stage2_epochs: Option<usize>,
    /// Sparse-penalty coefficient α.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Adversarial-loss coefficient β.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub sparse_mode: Option<SparseModeArg>,
    /// Comma-separated perturbation ratios for sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    /// Evaluation head (defaults to the variant's natural head).
    #[arg(long, global = true, value_enum)]
    pub head: Option<FusionHeadArg>,
}

// clap needs ValueEnum, which the core types do not implement; these small
// argument enums bridge the gap.

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
#[clap(rename_all = "snake_case")]
pub enum SparseModeArg {
    Literal,
    LogitL1,
}

impl From<SparseModeArg> for SparseMode {
    fn from(a: SparseModeArg) -> SparseMode {
        match a {
            SparseModeArg::Literal => SparseMode::Literal,
            SparseModeArg::LogitL1 => SparseMode::LogitL1,
        }
    }
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
#[clap(rename_all = "snake_case")]
pub enum FusionHeadArg {
    AugOnly,
    GenOnly,
    MeanFusion,
}

impl From<FusionHeadArg> for FusionHead {
    fn from(a: FusionHeadArg) -> FusionHead {
        match a {
            FusionHeadArg::AugOnly => FusionHead::AugOnly,
            FusionHeadArg::GenOnly => FusionHead::GenOnly,
            FusionHeadArg::MeanFusion => FusionHead::MeanFusion,
        }
    }
}

pub fn resolve(over: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let file = match &over.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    let dataset = over
        .dataset
        .clone()
        .or(file.dataset)
        .ok_or_else(|| ConfigError("no dataset given (--dataset or config file)".into()))?;
    let label_column = over
        .label_column
        .clone()
        .or(file.label_column)
        .ok_or_else(|| ConfigError("no label column given (--label-column or config file)".into()))?;
    let output_dir = over
        .out
        .clone()
        .or(file.output_dir)
        .ok_or_else(|| ConfigError("no output directory given (--out or config file)".into()))?;

    let fidelity = over.fidelity || file.fidelity.unwrap_or(false);
    let profile_epochs = if fidelity { FIDELITY_EPOCHS } else { DESK_EPOCHS };

    let s1_default = StageOneConfig::default();
    let stage1 = StageOneConfig {
        epochs: over
            .stage1_epochs
            .or(file.stage1.epochs)
            .unwrap_or(profile_epochs),
        learning_rate: file.stage1.learning_rate.unwrap_or(s1_default.learning_rate),
        beta1: file.stage1.beta1.unwrap_or(s1_default.beta1),
        beta2: file.stage1.beta2.unwrap_or(s1_default.beta2),
        epsilon: file.stage1.epsilon.unwrap_or(s1_default.epsilon),
        alpha: over.alpha.or(file.stage1.alpha).unwrap_or(s1_default.alpha),
        sparse_mode: over
            .sparse_mode
            .map(SparseMode::from)
            .or(file.stage1.sparse_mode)
            .unwrap_or(s1_default.sparse_mode),
    };
    let s2_default = StageTwoConfig::default();
    let stage2 = StageTwoConfig {
        epochs: over
            .stage2_epochs
            .or(file.stage2.epochs)
            .unwrap_or(profile_epochs),
        learning_rate: file.stage2.learning_rate.unwrap_or(s2_default.learning_rate),
        beta: over.beta.or(file.stage2.beta).unwrap_or(s2_default.beta),
        d_steps_per_epoch: file
            .stage2
            .d_steps_per_epoch
            .unwrap_or(s2_default.d_steps_per_epoch),
        g_steps_per_epoch: file
            .stage2
            .g_steps_per_epoch
            .unwrap_or(s2_default.g_steps_per_epoch),
        clip_norm: file.stage2.clip_norm.unwrap_or(s2_default.clip_norm),
    };

    let gbdt_default = GbdtConfig::default();
    let gbdt = GbdtConfig {
        n_trees: file.gbdt.n_trees.map(Some).unwrap_or(gbdt_default.n_trees),
        max_depth: file.gbdt.max_depth.unwrap_or(gbdt_default.max_depth),
        min_samples_leaf: file
            .gbdt
            .min_samples_leaf
            .unwrap_or(gbdt_default.min_samples_leaf),
        shrinkage: file.gbdt.shrinkage.unwrap_or(gbdt_default.shrinkage),
    };
    let rf_default = RfConfig::default();
    let rf = RfConfig {
        n_trees: file.rf.n_trees.unwrap_or(rf_default.n_trees),
        max_depth: file.rf.max_depth.unwrap_or(rf_default.max_depth),
        min_samples_leaf: file.rf.min_samples_leaf.unwrap_or(rf_default.min_samples_leaf),
        seed: 0,
    };

    let config = ExperimentConfig {
        dataset,
        label_column,
        positive_label: over.positive_label.clone().or(file.positive_label),
        delta: over.delta.or(file.delta).unwrap_or(0.0),
        perturb_seed: over.perturb_seed.or(file.perturb_seed).unwrap_or(0),
        seeds: over
            .seeds
            .clone()
            .or(file.seeds)
            .unwrap_or_else(|| (0..10).collect()),
        variant: over.variant.or(file.variant).unwrap_or(Variant::Full),
        output_dir,
        p: over.p.or(file.p).unwrap_or(8),
        gbdt,
        rf,
        stage1,
        stage2,
        deltas: over
            .deltas
            .clone()
            .or(file.deltas)
            .unwrap_or_else(|| DEFAULT_SWEEP_DELTAS.to_vec()),
        eval_head: over.head.map(FusionHead::from).or(file.eval_head),
    };
    validate(&config)?;
    Ok(config)
}

fn validate(config: &ExperimentConfig) -> Result<(), ConfigError> {
    if config.label_column.is_empty() {
        return err("label column is empty");
    }
    if !(0.0..=1.0).contains(&config.delta) {
        return err(format!("delta {} outside [0, 1]", config.delta));
    }
    if config.seeds.is_empty() {
        return err("seeds list is empty");
    }
    let mut sorted = config.seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != config.seeds.len() {
        return err("seeds must be distinct");
    }
    if config.p < 2 {
        return err("embedding size p must be at least 2");
    }
    if config.deltas.is_empty() {
        return err("sweep deltas list is empty");
    }
    if !config.deltas.windows(2).all(|w| w[0] < w[1]) {
        return err("sweep deltas must be strictly increasing");
    }
    if config.deltas.iter().any(|d| !(0.0..=1.0).contains(d)) {
        return err("sweep deltas must lie in [0, 1]");
    }
    if config.gbdt.n_trees == Some(0) {
        return err("gbdt.n_trees must be positive");
    }
    if config.rf.n_trees == 0 {
        return err("rf.n_trees must be positive");
    }
    for (name, v) in [
        ("stage1.learning_rate", config.stage1.learning_rate),
        ("stage2.learning_rate", config.stage2.learning_rate),
        ("stage2.clip_norm", config.stage2.clip_norm),
    ] {
        if !v.is_finite() || v <= 0.0 {
            return err(format!("{name} must be positive, got {v}"));
        }
    }
    Ok(())
}

/// Checks the invariant that referenced paths exist; called by the commands
/// that read the raw dataset.
pub fn require_dataset(config: &ExperimentConfig) -> Result<(), ConfigError> {
    if !config.dataset.is_file() {
        return err(format!("dataset {} does not exist", config.dataset.display()));
    }
    Ok(())
}
