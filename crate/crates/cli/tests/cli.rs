//! Contract tests for the experiment commands: artifact layout, report and
//! table shapes, manifest completeness, determinism, failure isolation, and
//! the binary's exit codes. Training settings are kept tiny; model quality
//! is covered by the acceptance suite.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use fafcnn_cli::commands::{
    cmd_ablate, cmd_audit, cmd_eval, cmd_heatmap, cmd_prepare, cmd_sweep, cmd_train, CliError,
};
use fafcnn_cli::config::ExperimentConfig;
use fafcnn_cli::variants::Variant;
use fafcnn_core::datakit::PreparedMeta;
use fafcnn_core::forest::{GbdtConfig, RfConfig};
use fafcnn_core::hash::sha256_hex;
use fafcnn_core::synth::{wbc_like, write_standins};
use fafcnn_core::trainer::{FusionHead, StageOneConfig, StageTwoConfig};

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fafcnn_cli_{name}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn wbc_csv(dir: &Path) -> PathBuf {
    write_standins(dir).unwrap();
    dir.join(wbc_like().file_name)
}

fn quick_config(dataset: &Path, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: dataset.to_path_buf(),
        label_column: "class".into(),
        positive_label: None,
        delta: 0.0,
        perturb_seed: 0,
        seeds: vec![0, 1],
        variant: Variant::Full,
        output_dir: out.to_path_buf(),
        p: 4,
        gbdt: GbdtConfig { n_trees: Some(5), max_depth: 3, ..Default::default() },
        rf: RfConfig { n_trees: 8, ..Default::default() },
        stage1: StageOneConfig { epochs: 40, ..Default::default() },
        stage2: StageTwoConfig { epochs: 40, ..Default::default() },
        deltas: vec![0.0, 0.5],
        eval_head: None,
    }
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap_or_else(|e| {
        panic!("cannot read {}: {e}", path.display());
    }))
    .unwrap()
}

fn walk_files(root: &Path, out: &mut Vec<PathBuf>) {
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            walk_files(&path, out);
        } else {
            out.push(path);
        }
    }
}

fn snapshot(root: &Path) -> BTreeMap<String, String> {
    let mut files = Vec::new();
    walk_files(root, &mut files);
    files
        .into_iter()
        .map(|p| {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            (rel, sha256_hex(&std::fs::read(&p).unwrap()))
        })
        .collect()
}

#[test]
fn prepare_perturbs_the_documented_row_count_and_reruns_identically() {
    let dir = fresh_dir("prepare");
    let csv = wbc_csv(&dir);
    let out = dir.join("run");
    let mut config = quick_config(&csv, &out);
    config.delta = 0.5;
    cmd_prepare(&config).unwrap();

    for seed in [0u64, 1] {
        let meta: PreparedMeta =
            serde_json::from_slice(&std::fs::read(out.join(format!("prepared/seed_{seed}/meta.json"))).unwrap())
                .unwrap();
        assert_eq!(meta.n_perturbed, 350, "round(0.5 * 699)");
        assert_eq!(meta.n_rows, 699);
        assert_eq!(meta.split_seed, seed);
        assert_eq!(
            meta.split.train_idx.len() + meta.split.val_idx.len() + meta.split.test_idx.len(),
            699
        );
    }

    let first = snapshot(&out);
    cmd_prepare(&config).unwrap();
    assert_eq!(first, snapshot(&out), "prepare rerun changed bytes");

    let zero_out = dir.join("run_zero");
    let mut config = quick_config(&csv, &zero_out);
    config.delta = 0.0;
    cmd_prepare(&config).unwrap();
    let meta: PreparedMeta =
        serde_json::from_slice(&std::fs::read(zero_out.join("prepared/seed_0/meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta.n_perturbed, 0);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn manifest_lists_every_artifact_with_its_hash() {
    let dir = fresh_dir("manifest");
    let csv = wbc_csv(&dir);
    let out = dir.join("run");
    let mut config = quick_config(&csv, &out);
    config.variant = Variant::Base;
    config.seeds = vec![0];
    cmd_prepare(&config).unwrap();
    cmd_train(&config).unwrap();
    cmd_eval(&config).unwrap();

    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["format"], "manifest.v1");
    let listed: BTreeMap<String, String> =
        serde_json::from_value(manifest["files"].clone()).unwrap();
    let mut on_disk = snapshot(&out);
    on_disk.remove("manifest.json");
    assert_eq!(listed, on_disk, "manifest does not mirror the directory");

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_outputs_keep_the_fixed_metric_order() {
    let dir = fresh_dir("eval");
    let csv = wbc_csv(&dir);
    let out = dir.join("run");
    let mut config = quick_config(&csv, &out);
    config.variant = Variant::Base;
    cmd_prepare(&config).unwrap();
    cmd_train(&config).unwrap();
    cmd_eval(&config).unwrap();

    let table = std::fs::read_to_string(out.join("eval_table.tsv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "row\taccuracy\tsensitivity\tspecificity\tprecision");
    let row_names: Vec<&str> = lines[1..].iter().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(row_names, ["seed_0", "seed_1", "mean", "std"]);
    for line in &lines[1..] {
        assert_eq!(line.split('\t').count(), 5, "bad row: {line}");
    }

    let report = read_json(&out.join("eval_report.json"));
    assert_eq!(report["variant"], "base");
    assert_eq!(report["head"], "gen_only");
    assert_eq!(report["per_seed"].as_array().unwrap().len(), 2);
    assert!(report["aggregate"]["accuracy"]["mean"].as_f64().unwrap() > 0.5);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn full_pipeline_is_deterministic_across_reruns() {
    let dir = fresh_dir("determinism");
    let csv = wbc_csv(&dir);
    let out = dir.join("run");
    let mut config = quick_config(&csv, &out);
    config.seeds = vec![0];
    config.delta = 0.5;

    let run = |config: &ExperimentConfig| {
        cmd_prepare(config).unwrap();
        cmd_train(config).unwrap();
        cmd_eval(config).unwrap();
        snapshot(&config.output_dir)
    };
    let first = run(&config);
    let second = run(&config);
    assert_eq!(first, second, "identical runs produced different bytes");

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sweep_reports_every_requested_ratio_and_isolates_failures() {
    let dir = fresh_dir("sweep");
    let csv = wbc_csv(&dir);

    // Both ratios succeed.
    let out = dir.join("ok");
    let mut config = quick_config(&csv, &out);
    config.variant = Variant::Base;
    config.seeds = vec![0];
    config.deltas = vec![0.0, 0.5];
    cmd_sweep(&config).unwrap();
    let table = std::fs::read_to_string(out.join("sweep_table.tsv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("delta\taccuracy_mean\taccuracy_std"));
    assert!(lines[1].starts_with("0\t"));
    assert!(lines[2].starts_with("0.5\t"));
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split('\t').collect();
        assert_eq!(cells.len(), 9);
        // Mean columns are defined; std columns are nan with one seed.
        for mean in [cells[1], cells[3], cells[5], cells[7]] {
            assert!(mean.parse::<f64>().unwrap().is_finite(), "bad mean in {line}");
        }
    }
    for delta in ["0", "0.5"] {
        assert!(out.join(format!("sweep/delta_{delta}/eval_report.json")).is_file());
    }

    // Every ratio aborts in training; each row records it, the sibling
    // directories still exist, and the command reports the abort.
    let out = dir.join("abort");
    let mut config = quick_config(&csv, &out);
    config.seeds = vec![0];
    config.deltas = vec![0.0, 0.5];
    config.stage2.learning_rate = 1e200;
    let err = cmd_sweep(&config).unwrap_err();
    assert!(matches!(err, CliError::Aborted(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
    let report = read_json(&out.join("sweep_report.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(row["status"].as_str().unwrap().contains("non-finite"));
        assert!(row["aggregate"].is_null());
    }
    let table = std::fs::read_to_string(out.join("sweep_table.tsv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(1).unwrap().contains("nan"));
    for delta in ["0", "0.5"] {
        assert!(
            out.join(format!("sweep/delta_{delta}/train_report.json")).is_file(),
            "delta {delta} did not run"
        );
    }

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn ablate_tabulates_all_variants_against_base() {
    let dir = fresh_dir("ablate");
    let csv = wbc_csv(&dir);
    let out = dir.join("run");
    let mut config = quick_config(&csv, &out);
    config.seeds = vec![0, 1];
    config.delta = 0.5;
    cmd_ablate(&config).unwrap();

    let table = std::fs::read_to_string(out.join("ablate_table.tsv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "variant\taccuracy\tsensitivity\tprecision");
    assert_eq!(lines.len(), 5);
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["base", "rf_no_fam", "no_faim", "full"]);
    assert_eq!(lines[1], "base\t+0.00\t+0.00\t+0.00");
    for line in &lines[2..] {
        for cell in line.split('\t').skip(1) {
            assert!(
                cell == "nan" || cell.starts_with('+') || cell.starts_with('-'),
                "unsigned improvement cell: {cell}"
            );
        }
    }

    let report = read_json(&out.join("ablate_report.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let full = &rows[3];
    assert_eq!(full["status"], "ok");
    // Weight parity: every variant within ±10% of the full count.
    let target = full["n_params"].as_u64().unwrap() as f64;
    for row in rows {
        let n = row["n_params"].as_u64().unwrap() as f64;
        assert!(
            (n - target).abs() <= 0.10 * target,
            "{}: {n} weights vs target {target}",
            row["variant"]
        );
        if row["variant"] != "base" {
            assert!(row.get("welch_p_accuracy_vs_base").is_some());
        }
    }
    for variant in ["base", "rf_no_fam", "no_faim", "full"] {
        assert!(out.join(format!("ablate/{variant}/eval_report.json")).is_file());
    }

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn heatmap_matrices_are_symmetric_with_zero_diagonal() {
    let dir = fresh_dir("heatmap");
    let csv = wbc_csv(&dir);

    let train_run = |out: &Path, mode: &str| {
        let mut config = quick_config(&csv, out);
        config.seeds = vec![0];
        config.stage1.sparse_mode = match mode {
            "literal" => fafcnn_core::faim::SparseMode::Literal,
            _ => fafcnn_core::faim::SparseMode::LogitL1,
        };
        cmd_prepare(&config).unwrap();
        cmd_train(&config).unwrap();
        config
    };
    let run_a = dir.join("logit");
    let run_b = dir.join("literal");
    train_run(&run_a, "logit_l1");
    train_run(&run_b, "literal");

    let out = dir.join("maps");
    let mut config = quick_config(&csv, &out);
    config.seeds = vec![0];
    cmd_heatmap(&config, &[run_a.clone(), run_b.clone()]).unwrap();

    for mode in ["logit_l1", "literal"] {
        let grid: Vec<Vec<f64>> =
            std::fs::read_to_string(out.join(format!("heatmap/matrix_{mode}.tsv")))
                .unwrap()
                .lines()
                .map(|l| l.split('\t').map(|c| c.parse().unwrap()).collect())
                .collect();
        let n = grid.len();
        assert!(n > 1, "{mode}: empty matrix");
        let mut total = 0.0;
        for i in 0..n {
            assert_eq!(grid[i].len(), n, "{mode}: not square");
            assert_eq!(grid[i][i], 0.0, "{mode}: self-interaction at {i}");
            for j in 0..n {
                assert_eq!(grid[i][j], grid[j][i], "{mode}: asymmetry at ({i},{j})");
                assert!(grid[i][j] >= 0.0);
                total += grid[i][j];
            }
        }
        assert!(total > 0.0, "{mode}: all-zero matrix");

        let long = std::fs::read_to_string(out.join(format!("heatmap/long_{mode}.tsv"))).unwrap();
        assert_eq!(long.lines().count(), n * n + 1);
        assert_eq!(long.lines().next().unwrap(), "i\tj\tweight");
    }

    // Two runs with the same sparse mode cannot share one heatmap call.
    let err = cmd_heatmap(&config, &[run_a.clone(), run_a.clone()]).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn audit_verifies_gradients_at_trained_checkpoints() {
    let dir = fresh_dir("audit");
    let csv = wbc_csv(&dir);
    let out = dir.join("run");
    let mut config = quick_config(&csv, &out);
    config.seeds = vec![0];
    cmd_prepare(&config).unwrap();
    cmd_train(&config).unwrap();
    cmd_audit(&config, 5, 1e-4).unwrap();

    let report = read_json(&out.join("audit_report.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["probes_per_loss"], 5);
    assert!(report["max_rel_err"].as_f64().unwrap() <= 1e-4);
    assert_eq!(report["per_seed"].as_array().unwrap().len(), 1);

    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eval_head_override_changes_the_fusion_rule() {
    let dir = fresh_dir("head");
    let csv = wbc_csv(&dir);
    let out = dir.join("run");
    let mut config = quick_config(&csv, &out);
    config.seeds = vec![0];
    cmd_prepare(&config).unwrap();
    cmd_train(&config).unwrap();
    cmd_eval(&config).unwrap();
    let default_report = read_json(&out.join("eval_report.json"));
    assert_eq!(default_report["head"], "mean_fusion");

    config.eval_head = Some(FusionHead::AugOnly);
    cmd_eval(&config).unwrap();
    let overridden = read_json(&out.join("eval_report.json"));
    assert_eq!(overridden["head"], "aug_only");

    std::fs::remove_dir_all(&dir).ok();
}

// ---------------------------------------------------------------------------
// Exit codes through the binary
// ---------------------------------------------------------------------------

fn fafcnn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fafcnn"))
}

#[test]
fn binary_exit_codes_follow_the_error_taxonomy() {
    let dir = fresh_dir("exit_codes");
    let csv = wbc_csv(&dir);
    let csv_s = csv.to_str().unwrap();

    // Help is not an error.
    let status = fafcnn().arg("--help").output().unwrap();
    assert!(status.status.success());

    // Usage problems and config problems exit 1.
    let no_subcommand = fafcnn().output().unwrap();
    assert_eq!(no_subcommand.status.code(), Some(1));
    let unknown_flag = fafcnn().args(["train", "--bogus"]).output().unwrap();
    assert_eq!(unknown_flag.status.code(), Some(1));
    let missing_dataset = fafcnn()
        .args(["prepare", "--label-column", "class"])
        .arg("--out")
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert_eq!(missing_dataset.status.code(), Some(1));
    let dataset_not_a_file = fafcnn()
        .args(["prepare", "--dataset", "no_such.csv", "--label-column", "class"])
        .arg("--out")
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert_eq!(dataset_not_a_file.status.code(), Some(1));
    let bad_delta = fafcnn()
        .args(["prepare", "--dataset", csv_s, "--label-column", "class", "--delta", "1.5"])
        .arg("--out")
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert_eq!(bad_delta.status.code(), Some(1));

    // A table without the requested label column is a data error: exit 2.
    let missing_label = fafcnn()
        .args(["prepare", "--dataset", csv_s, "--label-column", "outcome"])
        .arg("--out")
        .arg(dir.join("x"))
        .output()
        .unwrap();
    assert_eq!(missing_label.status.code(), Some(2));

    // A training abort exits 3. The config file pins a step size that drives
    // stage 2 non-finite within a few epochs.
    let out = dir.join("abort");
    let config_path = dir.join("abort.toml");
    std::fs::write(
        &config_path,
        format!(
            r#"
dataset = "{csv_s}"
label_column = "class"
output_dir = "{}"
seeds = [0]
p = 4

[gbdt]
n_trees = 5
max_depth = 3

[stage1]
epochs = 10

[stage2]
epochs = 30
learning_rate = 1e200
"#,
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let prep = fafcnn().args(["prepare", "--config"]).arg(&config_path).output().unwrap();
    assert!(prep.status.success(), "{}", String::from_utf8_lossy(&prep.stderr));
    let train = fafcnn().args(["train", "--config"]).arg(&config_path).output().unwrap();
    assert_eq!(train.status.code(), Some(3), "{}", String::from_utf8_lossy(&train.stderr));

    std::fs::remove_dir_all(&dir).ok();
}
