//! The seven experiment commands and the artifact bookkeeping they share.
//!
//! Every command writes under the configured output directory and records
//! each file it produces in `manifest.json` (relative path → SHA-256), so a
//! run directory is self-describing. All outputs are deterministic functions
//! of the configuration: rerunning a command overwrites exactly the same
//! bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fafcnn_core::datakit::{
    impute_median, load_table_with_positive, perturb, split_8_1_1, standardize, load_prepared,
    Dataset, PerturbationSpec, PreparedMeta, PREPARED_FORMAT,
};
use fafcnn_core::error::CoreError;
use fafcnn_core::evalkit::{
    aggregate, confusion, metrics, welch_t_one_tailed, ConfusionMatrix, MetricReport,
    MetricSummary, RunAggregate,
};
use fafcnn_core::faim::{active_pairs, forward_sample, SparseMode};
use fafcnn_core::forest::encode_dataset;
use fafcnn_core::hash::sha256_hex;
use fafcnn_core::trainer::{
    finite_diff_audit, load_checkpoint, predict, AuditReport, Checkpoint, FusionHead,
    StageSummary, TraceRow, CHECKPOINT_FORMAT,
};

use crate::config::{ConfigError, ExperimentConfig, require_dataset};
use crate::variants::{trainable_params, train_variant, SplitTensors, Variant};

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(CoreError),
    /// One or more training units hit a non-finite loss; siblings finished
    /// and their artifacts are on disk.
    Aborted(String),
    /// A numerical check (gradient audit) exceeded its tolerance.
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(CoreError::NonFiniteLoss { .. }) => 3,
            CliError::Core(_) => 2,
            CliError::Aborted(_) | CliError::CheckFailed(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Aborted(msg) => write!(f, "training aborted: {msg}"),
            CliError::CheckFailed(msg) => write!(f, "check failed: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

pub type CmdResult<T> = Result<T, CliError>;

// ---------------------------------------------------------------------------
// Output tracking and the run manifest
// ---------------------------------------------------------------------------

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "manifest.v1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    files: BTreeMap<String, String>,
}

/// Collects (relative path, content hash) pairs for everything a command
/// writes and merges them into the run manifest on `finalize`. Entries for
/// files that no longer exist are dropped, so the manifest always describes
/// the directory as it is.
pub struct OutputTracker {
    root: PathBuf,
    written: BTreeMap<String, String>,
}

impl OutputTracker {
    pub fn new(root: &Path) -> CmdResult<OutputTracker> {
        std::fs::create_dir_all(root).map_err(CoreError::from)?;
        Ok(OutputTracker { root: root.to_path_buf(), written: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> CmdResult<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(CoreError::from)?;
        }
        std::fs::write(&path, bytes).map_err(CoreError::from)?;
        self.written.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CmdResult<()> {
        let mut json = serde_json::to_string_pretty(value).map_err(CoreError::from)?;
        json.push('\n');
        self.write_bytes(rel, json.as_bytes())
    }

    /// Records a file some core helper wrote directly.
    pub fn adopt(&mut self, rel: &str) -> CmdResult<()> {
        let bytes = std::fs::read(self.root.join(rel)).map_err(CoreError::from)?;
        self.written.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn finalize(self) -> CmdResult<()> {
        let manifest_path = self.root.join(MANIFEST_FILE);
        let mut files = match std::fs::read(&manifest_path) {
            Ok(bytes) => serde_json::from_slice::<Manifest>(&bytes)
                .map(|m| m.files)
                .unwrap_or_default(),
            Err(_) => BTreeMap::new(),
        };
        files.retain(|rel, _| self.root.join(rel).is_file());
        files.extend(self.written);
        let manifest = Manifest { format: MANIFEST_FORMAT.to_string(), files };
        let mut json = serde_json::to_string_pretty(&manifest).map_err(CoreError::from)?;
        json.push('\n');
        std::fs::write(manifest_path, json).map_err(CoreError::from)?;
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"))
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

fn prepared_dir(seed: u64) -> String {
    format!("prepared/seed_{seed}")
}

/// Imputes and perturbs once, then writes one split artifact per seed under
/// `<prefix>prepared/`. Returns the number of perturbed rows.
fn prepare_into(
    config: &ExperimentConfig,
    delta: f64,
    prefix: &str,
    tracker: &mut OutputTracker,
) -> CmdResult<usize> {
    let raw = load_table_with_positive::<f64>(
        &config.dataset,
        &config.label_column,
        config.positive_label.as_deref(),
    )?;
    let imputed = impute_median(&raw)?;
    let outcome = perturb(&imputed, &PerturbationSpec { delta, seed: config.perturb_seed })?;

    for &seed in &config.seeds {
        let split = split_8_1_1(&outcome.data, seed)?;
        let data = standardize(&outcome.data, &split);
        let meta = PreparedMeta {
            format: PREPARED_FORMAT.to_string(),
            source: config.dataset.display().to_string(),
            label_column: config.label_column.clone(),
            positive_label: raw.positive_label.clone(),
            negative_label: raw.negative_label.clone(),
            delta,
            perturb_seed: config.perturb_seed,
            split_seed: seed,
            n_rows: data.n_rows(),
            n_features: data.n_features(),
            n_perturbed: outcome.n_perturbed,
            column_medians: data.column_medians.clone(),
            standardization: data.standardization.clone().expect("standardized"),
            split,
        };
        let rel_dir = format!("{prefix}{}", prepared_dir(seed));
        fafcnn_core::datakit::save_prepared(&tracker.root().join(&rel_dir), &data, &meta)?;
        tracker.adopt(&format!("{rel_dir}/data.csv"))?;
        tracker.adopt(&format!("{rel_dir}/meta.json"))?;
    }
    Ok(outcome.n_perturbed)
}

pub fn cmd_prepare(config: &ExperimentConfig) -> CmdResult<()> {
    require_dataset(config)?;
    let mut tracker = OutputTracker::new(&config.output_dir)?;
    let n_perturbed = prepare_into(config, config.delta, "", &mut tracker)?;
    tracker.finalize()?;
    println!(
        "prepared {} split artifacts under {} (delta {}, {} perturbed rows)",
        config.seeds.len(),
        config.output_dir.display(),
        config.delta,
        n_perturbed
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TraceFile {
    seed: u64,
    variant: String,
    rows: Vec<TraceRow>,
}

#[derive(Clone, Serialize, Deserialize)]
pub struct TrainSeedRow {
    pub seed: u64,
    /// "ok", or "aborted: <error>" for a non-finite loss on this seed.
    pub status: String,
    pub n_params: Option<usize>,
    /// Trainable-weight count of the full variant on the same data, the
    /// reference every variant is sized against.
    pub parity_target: Option<usize>,
    pub stage_one: Option<StageSummary>,
    pub stage_two: Option<StageSummary>,
}

#[derive(Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: String,
    pub seeds: Vec<TrainSeedRow>,
}

fn load_split(dir: &Path) -> CmdResult<(Dataset<f64>, PreparedMeta, SplitTensors)> {
    let (data, meta) = load_prepared(dir)?;
    let (x_train, y_train) = data.gather(&meta.split.train_idx);
    let (x_val, y_val) = data.gather(&meta.split.val_idx);
    Ok((data, meta, SplitTensors { x_train, y_train, x_val, y_val }))
}

/// Trains `variant` on every prepared seed under `prepared_prefix`, writing
/// checkpoints, traces, and the training report under `run_prefix`. A seed
/// whose loss turns non-finite is recorded and skipped; other errors stop
/// the run.
fn train_into(
    config: &ExperimentConfig,
    variant: Variant,
    prepared_prefix: &str,
    run_prefix: &str,
    tracker: &mut OutputTracker,
) -> CmdResult<TrainReport> {
    let mut rows = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let dir = tracker.root().join(format!("{prepared_prefix}{}", prepared_dir(seed)));
        let (_, _, tensors) = load_split(&dir)?;
        match train_variant(
            variant,
            &tensors,
            seed,
            &config.gbdt,
            &config.rf,
            config.p,
            &config.stage1,
            &config.stage2,
        ) {
            Ok(model) => {
                let ckpt_json =
                    serde_json::to_string_pretty(&model.checkpoint).map_err(CoreError::from)?;
                tracker.write_bytes(
                    &format!("{run_prefix}checkpoints/seed_{seed}.json"),
                    (ckpt_json + "\n").as_bytes(),
                )?;
                tracker.write_json(
                    &format!("{run_prefix}traces/seed_{seed}.json"),
                    &TraceFile {
                        seed,
                        variant: variant.name().to_string(),
                        rows: model.trace,
                    },
                )?;
                rows.push(TrainSeedRow {
                    seed,
                    status: "ok".to_string(),
                    n_params: Some(trainable_params(&model.checkpoint)),
                    parity_target: Some(model.widths.target),
                    stage_one: model.checkpoint.stage_one,
                    stage_two: model.checkpoint.stage_two,
                });
            }
            Err(e @ CoreError::NonFiniteLoss { .. }) => {
                rows.push(TrainSeedRow {
                    seed,
                    status: format!("aborted: {e}"),
                    n_params: None,
                    parity_target: None,
                    stage_one: None,
                    stage_two: None,
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let report = TrainReport { variant: variant.name().to_string(), seeds: rows };
    tracker.write_json(&format!("{run_prefix}train_report.json"), &report)?;
    Ok(report)
}

pub fn cmd_train(config: &ExperimentConfig) -> CmdResult<()> {
    let mut tracker = OutputTracker::new(&config.output_dir)?;
    let report = train_into(config, config.variant, "", "", &mut tracker)?;
    tracker.finalize()?;
    let aborted: Vec<&TrainSeedRow> =
        report.seeds.iter().filter(|r| r.status != "ok").collect();
    println!(
        "trained {} on {} seeds ({} ok, {} aborted)",
        report.variant,
        report.seeds.len(),
        report.seeds.len() - aborted.len(),
        aborted.len()
    );
    if let Some(row) = aborted.first() {
        return Err(CliError::Aborted(format!("seed {}: {}", row.seed, row.status)));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct SeedEval {
    pub seed: u64,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricReport,
}

#[derive(Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub head: FusionHead,
    pub per_seed: Vec<SeedEval>,
    pub aggregate: RunAggregate,
}

fn eval_checkpoint(
    ckpt: &Checkpoint<f64>,
    data: &Dataset<f64>,
    meta: &PreparedMeta,
    head: FusionHead,
) -> CmdResult<(ConfusionMatrix, MetricReport)> {
    let (x_test, y_test) = data.gather(&meta.split.test_idx);
    let mut preds = Vec::with_capacity(x_test.len());
    for x in &x_test {
        preds.push(predict(ckpt, x, head)?.1);
    }
    let cm = confusion(&preds, &y_test)?;
    Ok((cm, metrics(&cm)))
}

/// Evaluates every seed's checkpoint on its test split and writes the report
/// and the delimited table. The head defaults to the checkpoint variant's
/// natural one.
fn eval_into(
    config: &ExperimentConfig,
    prepared_prefix: &str,
    run_prefix: &str,
    head_override: Option<FusionHead>,
    tracker: &mut OutputTracker,
) -> CmdResult<EvalReport> {
    let mut per_seed = Vec::with_capacity(config.seeds.len());
    let mut reports = Vec::with_capacity(config.seeds.len());
    let mut variant_name: Option<String> = None;
    let mut head = head_override;
    for &seed in &config.seeds {
        let ckpt = load_checkpoint::<f64>(
            &tracker.root().join(format!("{run_prefix}checkpoints/seed_{seed}.json")),
        )?;
        let variant = Variant::from_name(&ckpt.variant)?;
        match &variant_name {
            Some(name) if *name != ckpt.variant => {
                return Err(CoreError::Invalid(format!(
                    "mixed variants in one run: {name} and {}",
                    ckpt.variant
                ))
                .into())
            }
            Some(_) => {}
            None => variant_name = Some(ckpt.variant.clone()),
        }
        let seed_head = *head.get_or_insert_with(|| variant.default_head());
        let dir = tracker.root().join(format!("{prepared_prefix}{}", prepared_dir(seed)));
        let (data, meta) = load_prepared(&dir)?;
        let (cm, m) = eval_checkpoint(&ckpt, &data, &meta, seed_head)?;
        reports.push(m);
        per_seed.push(SeedEval { seed, confusion: cm, metrics: m });
    }
    let report = EvalReport {
        variant: variant_name.expect("at least one seed"),
        head: head.expect("head fixed by first checkpoint"),
        per_seed,
        aggregate: aggregate(&reports)?,
    };
    tracker.write_json(&format!("{run_prefix}eval_report.json"), &report)?;
    tracker.write_bytes(&format!("{run_prefix}eval_table.tsv"), eval_table(&report).as_bytes())?;
    Ok(report)
}

fn eval_table(report: &EvalReport) -> String {
    let mut out = String::from("row\taccuracy\tsensitivity\tspecificity\tprecision\n");
    for row in &report.per_seed {
        let m = &row.metrics;
        let _ = writeln!(
            out,
            "seed_{}\t{}\t{}\t{}\t{}",
            row.seed,
            fmt_opt(m.accuracy),
            fmt_opt(m.sensitivity),
            fmt_opt(m.specificity),
            fmt_opt(m.precision)
        );
    }
    let agg = &report.aggregate;
    let cols = [&agg.accuracy, &agg.sensitivity, &agg.specificity, &agg.precision];
    let _ = writeln!(
        out,
        "mean\t{}",
        cols.map(|s| fmt_opt(Some(s.mean))).join("\t")
    );
    let _ = writeln!(out, "std\t{}", cols.map(|s| fmt_opt(s.std)).join("\t"));
    out
}

pub fn cmd_eval(config: &ExperimentConfig) -> CmdResult<()> {
    let mut tracker = OutputTracker::new(&config.output_dir)?;
    let report = eval_into(config, "", "", config.eval_head, &mut tracker)?;
    tracker.finalize()?;
    println!(
        "evaluated {} ({:?} head) over {} seeds: mean accuracy {:.4}",
        report.variant,
        report.head,
        report.per_seed.len(),
        report.aggregate.accuracy.mean
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    /// "ok", or the error that sank this ratio; other ratios are unaffected.
    pub status: String,
    pub aggregate: Option<RunAggregate>,
}

#[derive(Serialize, Deserialize)]
pub struct SweepReport {
    pub variant: String,
    pub rows: Vec<SweepRow>,
}

fn sweep_table(report: &SweepReport) -> String {
    let mut out = String::from(
        "delta\taccuracy_mean\taccuracy_std\tsensitivity_mean\tsensitivity_std\t\
         specificity_mean\tspecificity_std\tprecision_mean\tprecision_std\n",
    );
    for row in &report.rows {
        let cells: Vec<String> = match &row.aggregate {
            Some(agg) => [&agg.accuracy, &agg.sensitivity, &agg.specificity, &agg.precision]
                .iter()
                .flat_map(|s: &&MetricSummary| [fmt_opt(Some(s.mean)), fmt_opt(s.std)])
                .collect(),
            None => vec!["nan".to_string(); 8],
        };
        let _ = writeln!(out, "{}\t{}", row.delta, cells.join("\t"));
    }
    out
}

/// One prepare → train → eval pipeline per perturbation ratio, each under
/// `sweep/delta_<δ>/`. A failing ratio is recorded in its row and the sweep
/// moves on.
pub fn cmd_sweep(config: &ExperimentConfig) -> CmdResult<()> {
    require_dataset(config)?;
    let mut tracker = OutputTracker::new(&config.output_dir)?;
    let mut rows = Vec::with_capacity(config.deltas.len());
    let mut worst: Option<CliError> = None;
    for &delta in &config.deltas {
        let prefix = format!("sweep/delta_{delta}/");
        let result = prepare_into(config, delta, &prefix, &mut tracker)
            .and_then(|_| train_into(config, config.variant, &prefix, &prefix, &mut tracker))
            .and_then(|train| {
                if let Some(row) = train.seeds.iter().find(|r| r.status != "ok") {
                    return Err(CliError::Aborted(format!(
                        "seed {}: {}",
                        row.seed, row.status
                    )));
                }
                eval_into(config, &prefix, &prefix, config.eval_head, &mut tracker)
            });
        match result {
            Ok(eval) => {
                println!(
                    "delta {delta}: mean accuracy {:.4}",
                    eval.aggregate.accuracy.mean
                );
                rows.push(SweepRow {
                    delta,
                    status: "ok".to_string(),
                    aggregate: Some(eval.aggregate),
                });
            }
            Err(e) => {
                println!("delta {delta}: failed ({e})");
                rows.push(SweepRow { delta, status: e.to_string(), aggregate: None });
                if worst.as_ref().map_or(true, |w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    let report = SweepReport { variant: config.variant.name().to_string(), rows };
    tracker.write_json("sweep_report.json", &report)?;
    tracker.write_bytes("sweep_table.tsv", sweep_table(&report).as_bytes())?;
    tracker.finalize()?;
    match worst {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

/// Relative improvement over the base variant, in percent, for the three
/// headline metrics.
#[derive(Clone, Copy, Serialize, Deserialize)]
pub struct Improvement {
    pub accuracy_pct: Option<f64>,
    pub sensitivity_pct: Option<f64>,
    pub precision_pct: Option<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct AblateRow {
    pub variant: String,
    pub status: String,
    pub n_params: Option<usize>,
    pub aggregate: Option<RunAggregate>,
    pub improvement: Option<Improvement>,
    /// One-tailed Welch p for this variant's per-seed accuracy exceeding
    /// base's; absent for base itself and for degenerate samples.
    pub welch_p_accuracy_vs_base: Option<f64>,
}

#[derive(Serialize, Deserialize)]
pub struct AblateReport {
    pub delta: f64,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblateRow>,
}

fn pct_gain(variant: &MetricSummary, base: &MetricSummary) -> Option<f64> {
    (base.mean != 0.0).then(|| (variant.mean - base.mean) / base.mean * 100.0)
}

fn accuracy_column(agg: &RunAggregate) -> Vec<f64> {
    agg.reports.iter().filter_map(|r| r.accuracy).collect()
}

fn ablate_table(report: &AblateReport) -> String {
    let mut out = String::from("variant\taccuracy\tsensitivity\tprecision\n");
    for row in &report.rows {
        let cells = match &row.improvement {
            Some(imp) => [imp.accuracy_pct, imp.sensitivity_pct, imp.precision_pct]
                .map(|v| v.map_or_else(|| "nan".to_string(), |x| format!("{x:+.2}"))),
            None => ["nan".to_string(), "nan".to_string(), "nan".to_string()],
        };
        let _ = writeln!(out, "{}\t{}", row.variant, cells.join("\t"));
    }
    out
}

/// All four variants on one shared prepared artifact and seed list, reported
/// as relative improvement over base. A variant that fails is recorded and
/// the others still run.
pub fn cmd_ablate(config: &ExperimentConfig) -> CmdResult<()> {
    require_dataset(config)?;
    let mut tracker = OutputTracker::new(&config.output_dir)?;
    prepare_into(config, config.delta, "ablate/", &mut tracker)?;

    let mut results: Vec<(Variant, Result<(TrainReport, EvalReport), CliError>)> = Vec::new();
    for variant in Variant::all() {
        let prefix = format!("ablate/{}/", variant.name());
        let result = train_into(config, variant, "ablate/", &prefix, &mut tracker)
            .and_then(|train| {
                if let Some(row) = train.seeds.iter().find(|r| r.status != "ok") {
                    return Err(CliError::Aborted(format!(
                        "seed {}: {}",
                        row.seed, row.status
                    )));
                }
                let eval = eval_into(config, "ablate/", &prefix, None, &mut tracker)?;
                Ok((train, eval))
            });
        match &result {
            Ok((_, eval)) => println!(
                "{variant}: mean accuracy {:.4}",
                eval.aggregate.accuracy.mean
            ),
            Err(e) => println!("{variant}: failed ({e})"),
        }
        results.push((variant, result));
    }

    let base_agg = results
        .iter()
        .find(|(v, _)| *v == Variant::Base)
        .and_then(|(_, r)| r.as_ref().ok())
        .map(|(_, eval)| eval.aggregate.clone());

    let mut worst: Option<i32> = None;
    let mut rows = Vec::with_capacity(results.len());
    for (variant, result) in results {
        match result {
            Ok((train, eval)) => {
                let improvement = base_agg.as_ref().map(|base| Improvement {
                    accuracy_pct: pct_gain(&eval.aggregate.accuracy, &base.accuracy),
                    sensitivity_pct: pct_gain(&eval.aggregate.sensitivity, &base.sensitivity),
                    precision_pct: pct_gain(&eval.aggregate.precision, &base.precision),
                });
                let welch = match (&base_agg, variant) {
                    (_, Variant::Base) | (None, _) => None,
                    (Some(base), _) => welch_t_one_tailed(
                        &accuracy_column(&eval.aggregate),
                        &accuracy_column(base),
                    )
                    .ok()
                    .map(|w| w.p),
                };
                rows.push(AblateRow {
                    variant: variant.name().to_string(),
                    status: "ok".to_string(),
                    n_params: train.seeds.iter().find_map(|r| r.n_params),
                    aggregate: Some(eval.aggregate),
                    improvement,
                    welch_p_accuracy_vs_base: welch,
                });
            }
            Err(e) => {
                if worst.map_or(true, |w| e.exit_code() > w) {
                    worst = Some(e.exit_code());
                }
                rows.push(AblateRow {
                    variant: variant.name().to_string(),
                    status: e.to_string(),
                    n_params: None,
                    aggregate: None,
                    improvement: None,
                    welch_p_accuracy_vs_base: None,
                });
            }
        }
    }
    let report = AblateReport { delta: config.delta, seeds: config.seeds.clone(), rows };
    tracker.write_json("ablate_report.json", &report)?;
    tracker.write_bytes("ablate_table.tsv", ablate_table(&report).as_bytes())?;
    tracker.finalize()?;
    match worst {
        Some(3) => Err(CliError::Aborted("see ablate_report.json".into())),
        Some(_) => Err(CliError::Core(CoreError::Invalid(
            "one or more variants failed; see ablate_report.json".into(),
        ))),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// heatmap
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct HeatmapRun {
    pub run: String,
    pub sparse_mode: SparseMode,
    pub n_checkpoints: usize,
    pub n_samples: usize,
    pub total_dim: usize,
}

#[derive(Serialize, Deserialize)]
pub struct HeatmapReport {
    pub runs: Vec<HeatmapRun>,
}

fn mode_name(mode: SparseMode) -> &'static str {
    match mode {
        SparseMode::Literal => "literal",
        SparseMode::LogitL1 => "logit_l1",
    }
}

/// Test-set average of the pairwise attention weights from one run's
/// checkpoints. Checkpoints may disagree on encoding size (their forests are
/// fitted per split), so the matrix takes the largest and missing pairs
/// contribute zero, like any other pair a sample leaves inactive.
fn average_attention(
    run_root: &Path,
    seeds: &[u64],
) -> CmdResult<(SparseMode, Vec<Vec<f64>>, usize)> {
    let mut mode: Option<SparseMode> = None;
    let mut matrix: Vec<Vec<f64>> = Vec::new();
    let mut n_samples = 0usize;
    for &seed in seeds {
        let ckpt =
            load_checkpoint::<f64>(&run_root.join(format!("checkpoints/seed_{seed}.json")))?;
        if ckpt.variant != Variant::Full.name() {
            return Err(CoreError::Invalid(format!(
                "heatmap needs full-variant checkpoints, found '{}'",
                ckpt.variant
            ))
            .into());
        }
        let faim = ckpt.faim.as_ref().expect("full checkpoint");
        let gbdt = ckpt.gbdt.as_ref().expect("full checkpoint");
        let run_mode =
            ckpt.stage_one_config.as_ref().map(|c| c.sparse_mode).unwrap_or(SparseMode::LogitL1);
        match mode {
            Some(m) if m != run_mode => {
                return Err(CoreError::Invalid(
                    "checkpoints in one run mix sparse modes".into(),
                )
                .into())
            }
            _ => mode = Some(run_mode),
        }
        let td = faim.total_dim();
        if matrix.len() < td {
            for row in &mut matrix {
                row.resize(td, 0.0);
            }
            matrix.resize_with(td, || vec![0.0; td]);
        }

        let (data, meta) = load_prepared(&run_root.join(prepared_dir(seed)))?;
        let (x_test, _) = data.gather(&meta.split.test_idx);
        let x_aug = encode_dataset(gbdt, &x_test);
        for row in &x_aug {
            let iset = active_pairs(row);
            let cache = forward_sample(faim, row, &iset);
            for (pair, &(i, j)) in iset.pairs.iter().enumerate() {
                let w = cache.attention.weights[pair];
                matrix[i][j] += w;
                matrix[j][i] += w;
            }
            n_samples += 1;
        }
    }
    if n_samples == 0 {
        return Err(CoreError::EmptyInput("no test samples for heatmap".into()).into());
    }
    for row in &mut matrix {
        for v in row {
            *v /= n_samples as f64;
        }
    }
    Ok((mode.expect("at least one checkpoint"), matrix, n_samples))
}

fn matrix_tsv(matrix: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in matrix {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.8}")).collect();
        let _ = writeln!(out, "{}", cells.join("\t"));
    }
    out
}

fn long_tsv(matrix: &[Vec<f64>]) -> String {
    let mut out = String::from("i\tj\tweight\n");
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{j}\t{v:.8}");
        }
    }
    out
}

/// Averages attention weights from one or more runs (one matrix per run,
/// named by that run's sparse mode, so a literal and a logit_l1 run land
/// side by side).
pub fn cmd_heatmap(config: &ExperimentConfig, runs: &[PathBuf]) -> CmdResult<()> {
    let mut tracker = OutputTracker::new(&config.output_dir)?;
    let run_dirs: Vec<PathBuf> = if runs.is_empty() {
        vec![config.output_dir.clone()]
    } else {
        runs.to_vec()
    };
    let mut report = HeatmapReport { runs: Vec::new() };
    for dir in &run_dirs {
        let (mode, matrix, n_samples) = average_attention(dir, &config.seeds)?;
        let name = mode_name(mode);
        if report.runs.iter().any(|r| r.sparse_mode == mode) {
            return Err(CoreError::Invalid(format!(
                "two runs with sparse mode {name}; pass one run per mode"
            ))
            .into());
        }
        tracker.write_bytes(&format!("heatmap/matrix_{name}.tsv"), matrix_tsv(&matrix).as_bytes())?;
        tracker.write_bytes(&format!("heatmap/long_{name}.tsv"), long_tsv(&matrix).as_bytes())?;
        println!(
            "heatmap[{name}]: {}×{} matrix from {} samples",
            matrix.len(),
            matrix.len(),
            n_samples
        );
        report.runs.push(HeatmapRun {
            run: dir.display().to_string(),
            sparse_mode: mode,
            n_checkpoints: config.seeds.len(),
            n_samples,
            total_dim: matrix.len(),
        });
    }
    tracker.write_json("heatmap/heatmap_report.json", &report)?;
    tracker.finalize()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct AuditSeed {
    pub seed: u64,
    pub report: AuditReport,
}

#[derive(Serialize, Deserialize)]
pub struct AuditFile {
    pub tolerance: f64,
    pub probes_per_loss: usize,
    pub per_seed: Vec<AuditSeed>,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Central-difference gradient check of every training loss at each trained
/// checkpoint's parameters, on that checkpoint's own training split.
pub fn cmd_audit(config: &ExperimentConfig, probes: usize, tolerance: f64) -> CmdResult<()> {
    let mut tracker = OutputTracker::new(&config.output_dir)?;
    let mut per_seed = Vec::with_capacity(config.seeds.len());
    let mut max_rel_err = 0.0f64;
    for &seed in &config.seeds {
        let ckpt =
            load_checkpoint::<f64>(&tracker.root().join(format!("checkpoints/seed_{seed}.json")))?;
        if ckpt.variant != Variant::Full.name() {
            return Err(CoreError::Invalid(format!(
                "audit needs full-variant checkpoints, found '{}'",
                ckpt.variant
            ))
            .into());
        }
        let (data, meta) = load_prepared(&tracker.root().join(prepared_dir(seed)))?;
        let (x_train, y_train) = data.gather(&meta.split.train_idx);
        let gbdt = ckpt.gbdt.as_ref().expect("full checkpoint");
        let x_aug = encode_dataset(gbdt, &x_train);
        let report = finite_diff_audit(
            ckpt.faim.as_ref().expect("full checkpoint"),
            &ckpt.classifier,
            ckpt.generator.as_ref().expect("full checkpoint"),
            ckpt.discriminator.as_ref().expect("full checkpoint"),
            &x_aug,
            &x_train,
            &y_train,
            ckpt.stage_one_config.as_ref().unwrap_or(&config.stage1),
            ckpt.stage_two_config.as_ref().unwrap_or(&config.stage2),
            probes,
            seed,
        );
        println!("audit seed {seed}: max relative error {:.3e}", report.max_rel_err);
        max_rel_err = max_rel_err.max(report.max_rel_err);
        per_seed.push(AuditSeed { seed, report });
    }
    let pass = max_rel_err <= tolerance;
    let file = AuditFile { tolerance, probes_per_loss: probes, per_seed, max_rel_err, pass };
    tracker.write_json("audit_report.json", &file)?;
    tracker.finalize()?;
    println!(
        "audit {} (max {:.3e} vs tolerance {:.1e})",
        if pass { "pass" } else { "FAIL" },
        max_rel_err,
        tolerance
    );
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "gradient audit max relative error {max_rel_err:.3e} exceeds {tolerance:.1e}"
        )))
    }
}

// Re-exported for integration tests that need to read checkpoints back.
pub fn checkpoint_format() -> &'static str {
    CHECKPOINT_FORMAT
}
