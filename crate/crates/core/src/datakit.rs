//! Dataset loading and the preprocessing protocol: median imputation,
//! δ-perturbation, 8:1:1 splitting, and train-statistics standardization.
//!
//! The protocol order is load → impute → perturb → split → standardize.
//! Perturbation happens before splitting on purpose: replacement medians are
//! computed on the full post-imputation table, and the mild train/test
//! leakage that implies is accepted rather than "fixed".

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::rng_from;
use crate::scalar::Real;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Parsed delimited table: numeric cells with missing markers, decoded labels.
#[derive(Clone, Debug)]
pub struct RawTable<R> {
    pub feature_names: Vec<String>,
    /// N rows × d cells; `None` marks a missing value.
    pub cells: Vec<Vec<Option<R>>>,
    /// Labels decoded to {0,1}.
    pub labels: Vec<u8>,
    pub label_column: String,
    /// Raw label token mapped to class 1.
    pub positive_label: String,
    /// Raw label token mapped to class 0 (empty if the file only held the
    /// positive token).
    pub negative_label: String,
}

/// Complete feature matrix after imputation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset<R> {
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<R>>,
    pub labels: Vec<u8>,
    /// Per-column median of the originally non-missing values.
    pub column_medians: Vec<R>,
    /// Train-split statistics once [`standardize`] has run.
    pub standardization: Option<Standardization<R>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Standardization<R> {
    pub means: Vec<R>,
    /// Population standard deviations; entries ≤ 1e-12 mark columns that were
    /// centered without scaling.
    pub stds: Vec<R>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// Fraction of rows perturbed, in [0,1].
    pub delta: f64,
    pub seed: u64,
}

/// Result of [`perturb`]: the rewritten dataset plus bookkeeping for the
/// prepared-data sidecar and for tests.
#[derive(Clone, Debug)]
pub struct PerturbOutcome<R> {
    pub data: Dataset<R>,
    /// round(delta · N), half away from zero.
    pub n_perturbed: usize,
    /// (row, column) cells rewritten, rows in shuffled coordinates.
    pub touched: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBundle {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

impl Dataset<f64> {
    /// Converts the feature matrix into another scalar type. Medians and
    /// standardization stats are converted alongside.
    pub fn cast<R: Real>(&self) -> Dataset<R> {
        Dataset {
            feature_names: self.feature_names.clone(),
            features: self
                .features
                .iter()
                .map(|row| row.iter().map(|&v| R::of(v)).collect())
                .collect(),
            labels: self.labels.clone(),
            column_medians: self.column_medians.iter().map(|&v| R::of(v)).collect(),
            standardization: self.standardization.as_ref().map(|s| Standardization {
                means: s.means.iter().map(|&v| R::of(v)).collect(),
                stds: s.stds.iter().map(|&v| R::of(v)).collect(),
            }),
        }
    }
}

impl<R> Dataset<R> {
    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Row-subset view used to materialize a split.
    pub fn gather(&self, idx: &[usize]) -> (Vec<Vec<R>>, Vec<u8>)
    where
        R: Clone,
    {
        let rows = idx.iter().map(|&i| self.features[i].clone()).collect();
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        (rows, labels)
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Loads a comma-separated table with a header row. Blank, `?`, or otherwise
/// non-numeric feature cells become missing markers. Labels are decoded to
/// {0,1} with the lexicographically larger raw token as class 1.
pub fn load_table<R: Real>(path: impl AsRef<Path>, label_column: &str) -> Result<RawTable<R>> {
    load_table_with_positive(path, label_column, None)
}

/// [`load_table`] with an explicit positive-class token overriding the
/// lexicographic rule.
pub fn load_table_with_positive<R: Real>(
    path: impl AsRef<Path>,
    label_column: &str,
    positive: Option<&str>,
) -> Result<RawTable<R>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(CoreError::EmptyInput(format!("{display} has no header"))),
    };
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let label_pos = names
        .iter()
        .position(|n| n == label_column)
        .ok_or_else(|| CoreError::Schema(format!("label column '{label_column}' not in {display}")))?;
    let feature_names: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_pos)
        .map(|(_, n)| n.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(CoreError::Schema(format!("{display} has no feature columns")));
    }

    let mut cells: Vec<Vec<Option<R>>> = Vec::new();
    let mut label_tokens: Vec<String> = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(CoreError::Parse {
                path: display.clone(),
                line: lineno + 1,
                msg: format!("expected {} fields, found {}", names.len(), fields.len()),
            });
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (i, field) in fields.iter().enumerate() {
            if i == label_pos {
                label_tokens.push(field.trim().to_string());
            } else {
                row.push(parse_cell::<R>(field.trim()));
            }
        }
        cells.push(row);
    }
    if cells.is_empty() {
        return Err(CoreError::EmptyInput(format!("{display} has no data rows")));
    }

    let (labels, positive_label, negative_label) = decode_labels(&label_tokens, positive)?;
    Ok(RawTable {
        feature_names,
        cells,
        labels,
        label_column: label_column.to_string(),
        positive_label,
        negative_label,
    })
}

fn parse_cell<R: Real>(field: &str) -> Option<R> {
    if field.is_empty() || field == "?" {
        return None;
    }
    field.parse::<f64>().ok().filter(|v| v.is_finite()).map(R::of)
}

/// Decodes raw label tokens to {0,1}. Tokens `0`/`1` map literally; otherwise
/// exactly two distinct tokens are required and the lexicographically larger
/// one becomes class 1, unless `positive` names the class-1 token explicitly.
fn decode_labels(
    tokens: &[String],
    positive: Option<&str>,
) -> Result<(Vec<u8>, String, String)> {
    let mut distinct: Vec<&str> = Vec::new();
    for t in tokens {
        if !distinct.contains(&t.as_str()) {
            distinct.push(t);
        }
    }
    distinct.sort_unstable();

    let (pos, neg) = if let Some(p) = positive {
        let others: Vec<&str> = distinct.iter().copied().filter(|t| *t != p).collect();
        if others.len() > 1 {
            return Err(CoreError::Schema(format!(
                "labels not binary: positive '{p}' plus {others:?}"
            )));
        }
        (p.to_string(), others.first().unwrap_or(&"").to_string())
    } else if distinct.iter().all(|t| *t == "0" || *t == "1") {
        ("1".to_string(), "0".to_string())
    } else if distinct.len() == 2 {
        (distinct[1].to_string(), distinct[0].to_string())
    } else {
        return Err(CoreError::Schema(format!("labels not binary: {distinct:?}")));
    };

    let labels = tokens.iter().map(|t| u8::from(*t == pos)).collect();
    Ok((labels, pos, neg))
}

// ---------------------------------------------------------------------------
// Protocol steps
// ---------------------------------------------------------------------------

/// Median with the even-count mean-of-middle-two convention.
pub fn median<R: Real>(values: &[R]) -> R {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / R::of(2.0)
    }
}

/// Per-column medians of a complete matrix.
pub fn column_medians<R: Real>(rows: &[Vec<R>]) -> Vec<R> {
    let d = rows.first().map_or(0, Vec::len);
    (0..d)
        .map(|j| {
            let col: Vec<R> = rows.iter().map(|r| r[j]).collect();
            median(&col)
        })
        .collect()
}

/// Fills every missing cell with its column's median over the non-missing
/// values, and records those medians.
pub fn impute_median<R: Real>(raw: &RawTable<R>) -> Result<Dataset<R>> {
    let d = raw.feature_names.len();
    let mut medians = Vec::with_capacity(d);
    for j in 0..d {
        let present: Vec<R> = raw.cells.iter().filter_map(|row| row[j]).collect();
        if present.is_empty() {
            return Err(CoreError::Degenerate(format!(
                "column '{}' has no observed values",
                raw.feature_names[j]
            )));
        }
        medians.push(median(&present));
    }
    let features = raw
        .cells
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, cell)| cell.unwrap_or(medians[j]))
                .collect()
        })
        .collect();
    Ok(Dataset {
        feature_names: raw.feature_names.clone(),
        features,
        labels: raw.labels.clone(),
        column_medians: medians,
        standardization: None,
    })
}

/// Shuffles rows with `spec.seed`, then overwrites one uniformly chosen cell
/// in each of the first round(delta · N) rows with that column's median over
/// the full post-imputation table. The output keeps the shuffled order.
///
/// RNG draw order: one Fisher–Yates shuffle, then one column index per
/// perturbed row, in row order.
pub fn perturb<R: Real>(data: &Dataset<R>, spec: &PerturbationSpec) -> Result<PerturbOutcome<R>> {
    if !(0.0..=1.0).contains(&spec.delta) {
        return Err(CoreError::Invalid(format!(
            "delta must lie in [0,1], got {}",
            spec.delta
        )));
    }
    let n = data.n_rows();
    let d = data.n_features();
    let mut rng = rng_from(spec.seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut features: Vec<Vec<R>> = order.iter().map(|&i| data.features[i].clone()).collect();
    let labels: Vec<u8> = order.iter().map(|&i| data.labels[i]).collect();

    let n_perturbed = (spec.delta * n as f64).round() as usize;
    let replacements = column_medians(&data.features);
    let mut touched = Vec::with_capacity(n_perturbed);
    for row in 0..n_perturbed {
        let col = rng.gen_range(0..d);
        features[row][col] = replacements[col];
        touched.push((row, col));
    }

    Ok(PerturbOutcome {
        data: Dataset {
            feature_names: data.feature_names.clone(),
            features,
            labels,
            column_medians: data.column_medians.clone(),
            standardization: data.standardization.clone(),
        },
        n_perturbed,
        touched,
    })
}

/// Seeded shuffle, then the first floor(0.8·N) indices train, the next
/// floor(0.1·N) validate, and the remainder test.
pub fn split_8_1_1<R: Real>(data: &Dataset<R>, seed: u64) -> Result<SplitBundle> {
    let n = data.n_rows();
    if n < 10 {
        return Err(CoreError::Invalid(format!("need at least 10 rows to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(seed));
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let val_end = n_train + n_val;
    Ok(SplitBundle {
        train_idx: idx[..n_train].to_vec(),
        val_idx: idx[n_train..val_end].to_vec(),
        test_idx: idx[val_end..].to_vec(),
    })
}

/// Z-scores every column with train-split statistics (population convention).
/// Columns whose train std is ≤ 1e-12 are centered without scaling.
pub fn standardize<R: Real>(data: &Dataset<R>, split: &SplitBundle) -> Dataset<R> {
    let d = data.n_features();
    let n_train = split.train_idx.len();
    let mut means = vec![R::zero(); d];
    let mut stds = vec![R::zero(); d];
    for j in 0..d {
        let mut sum = R::zero();
        for &i in &split.train_idx {
            sum = sum + data.features[i][j];
        }
        let mean = sum / R::of(n_train as f64);
        let mut var = R::zero();
        for &i in &split.train_idx {
            let delta = data.features[i][j] - mean;
            var = var + delta * delta;
        }
        var = var / R::of(n_train as f64);
        means[j] = mean;
        stds[j] = var.sqrt();
    }

    let floor = R::of(1e-12);
    let features = data
        .features
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| {
                    let centered = v - means[j];
                    if stds[j] <= floor {
                        centered
                    } else {
                        centered / stds[j]
                    }
                })
                .collect()
        })
        .collect();

    Dataset {
        feature_names: data.feature_names.clone(),
        features,
        labels: data.labels.clone(),
        column_medians: data.column_medians.clone(),
        standardization: Some(Standardization { means, stds }),
    }
}

// ---------------------------------------------------------------------------
// Prepared-data artifacts
// ---------------------------------------------------------------------------

pub const PREPARED_FORMAT: &str = "prepared.v1";
pub const PREPARED_DATA_FILE: &str = "data.csv";
pub const PREPARED_META_FILE: &str = "meta.json";

/// Sidecar describing one prepared dataset directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreparedMeta {
    pub format: String,
    pub source: String,
    pub label_column: String,
    pub positive_label: String,
    pub negative_label: String,
    pub delta: f64,
    pub perturb_seed: u64,
    pub split_seed: u64,
    pub n_rows: usize,
    pub n_features: usize,
    pub n_perturbed: usize,
    pub column_medians: Vec<f64>,
    pub standardization: Standardization<f64>,
    pub split: SplitBundle,
}

/// Writes `data.csv` (standardized features plus 0/1 labels) and `meta.json`.
/// Both files are deterministic for identical inputs.
pub fn save_prepared(dir: &Path, data: &Dataset<f64>, meta: &PreparedMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = String::new();
    csv.push_str(&data.feature_names.join(","));
    csv.push(',');
    csv.push_str(&meta.label_column);
    csv.push('\n');
    for (row, label) in data.features.iter().zip(&data.labels) {
        for v in row {
            csv.push_str(&format!("{v}"));
            csv.push(',');
        }
        csv.push_str(&format!("{label}\n"));
    }
    fs::write(dir.join(PREPARED_DATA_FILE), csv)?;
    let mut json = serde_json::to_vec_pretty(meta)?;
    json.push(b'\n');
    fs::write(dir.join(PREPARED_META_FILE), json)?;
    Ok(())
}

/// Reads a directory written by [`save_prepared`]. `f64` text round-trips
/// exactly, so the reloaded matrix is bit-identical.
pub fn load_prepared(dir: &Path) -> Result<(Dataset<f64>, PreparedMeta)> {
    let meta: PreparedMeta =
        serde_json::from_slice(&fs::read(dir.join(PREPARED_META_FILE))?)?;
    if meta.format != PREPARED_FORMAT {
        return Err(CoreError::Schema(format!(
            "unsupported prepared format '{}'",
            meta.format
        )));
    }
    let path = dir.join(PREPARED_DATA_FILE);
    let display = path.display().to_string();
    let reader = BufReader::new(fs::File::open(&path)?);
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => return Err(CoreError::EmptyInput(display)),
    };
    let names: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let d = names.len() - 1;
    let mut features = Vec::with_capacity(meta.n_rows);
    let mut labels = Vec::with_capacity(meta.n_rows);
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(CoreError::Parse {
                path: display.clone(),
                line: lineno + 1,
                msg: format!("expected {} fields, found {}", d + 1, fields.len()),
            });
        }
        let mut row = Vec::with_capacity(d);
        for f in &fields[..d] {
            row.push(f.parse::<f64>().map_err(|e| CoreError::Parse {
                path: display.clone(),
                line: lineno + 1,
                msg: e.to_string(),
            })?);
        }
        labels.push(fields[d].parse::<u8>().map_err(|e| CoreError::Parse {
            path: display.clone(),
            line: lineno + 1,
            msg: e.to_string(),
        })?);
        features.push(row);
    }
    Ok((
        Dataset {
            feature_names: names[..d].to_vec(),
            features,
            labels,
            column_medians: meta.column_medians.clone(),
            standardization: Some(meta.standardization.clone()),
        },
        meta,
    ))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(name: &str, content: &str) -> std::path::PathBuf {
        let path = std::env::temp_dir().join(format!("datakit_test_{name}_{}", std::process::id()));
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn toy_dataset(features: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset<f64> {
        let d = features[0].len();
        Dataset {
            feature_names: (0..d).map(|j| format!("f{j}")).collect(),
            column_medians: column_medians(&features),
            features,
            labels,
            standardization: None,
        }
    }

    #[test]
    fn load_table_parses_features_and_missing_markers() {
        let path = write_temp("basic", "a,b,class\n1,2,0\n?,4.5,1\n3,,1\n");
        let t: RawTable<f64> = load_table(&path, "class").unwrap();
        assert_eq!(t.feature_names, vec!["a", "b"]);
        assert_eq!(t.cells[0], vec![Some(1.0), Some(2.0)]);
        assert_eq!(t.cells[1], vec![None, Some(4.5)]);
        assert_eq!(t.cells[2], vec![Some(3.0), None]);
        assert_eq!(t.labels, vec![0, 1, 1]);
        fs::remove_file(path).ok();
    }

    #[test]
    fn load_table_single_row() {
        let path = write_temp("single", "a,b,class\n1,2,0\n");
        let t: RawTable<f64> = load_table(&path, "class").unwrap();
        assert_eq!(t.cells.len(), 1);
        assert_eq!(t.feature_names.len(), 2);
        assert_eq!(t.labels, vec![0]);
        fs::remove_file(path).ok();
    }

    #[test]
    fn load_table_label_in_middle_column() {
        let path = write_temp("middle", "a,class,b\n1,0,2\n3,1,4\n");
        let t: RawTable<f64> = load_table(&path, "class").unwrap();
        assert_eq!(t.feature_names, vec!["a", "b"]);
        assert_eq!(t.cells[1], vec![Some(3.0), Some(4.0)]);
        fs::remove_file(path).ok();
    }

    #[test]
    fn load_table_rejects_non_binary_labels() {
        let path = write_temp("triple", "a,class\n1,0\n2,1\n3,3\n");
        let err = load_table::<f64>(&path, "class").unwrap_err();
        assert!(matches!(err, CoreError::Schema(_)), "{err}");
        fs::remove_file(path).ok();
    }

    #[test]
    fn load_table_rejects_missing_label_column() {
        let path = write_temp("nolabel", "a,b\n1,2\n");
        assert!(load_table::<f64>(&path, "class").is_err());
        fs::remove_file(path).ok();
    }

    #[test]
    fn labels_decode_lexicographically_with_override() {
        let (labels, pos, neg) = decode_labels(
            &["2".into(), "4".into(), "2".into()],
            None,
        )
        .unwrap();
        assert_eq!((labels, pos.as_str(), neg.as_str()), (vec![0, 1, 0], "4", "2"));

        let (labels, pos, _) = decode_labels(&["2".into(), "4".into()], Some("2")).unwrap();
        assert_eq!((labels, pos.as_str()), (vec![1, 0], "2"));
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 4.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert_eq!(median(&[5.0]), 5.0);
    }

    #[test]
    fn impute_fills_with_column_median() {
        let t = RawTable::<f64> {
            feature_names: vec!["a".into(), "b".into()],
            cells: vec![
                vec![Some(1.0), Some(1.0)],
                vec![None, Some(2.0)],
                vec![Some(3.0), None],
                vec![Some(2.0), Some(4.0)],
            ],
            labels: vec![0, 1, 0, 1],
            label_column: "class".into(),
            positive_label: "1".into(),
            negative_label: "0".into(),
        };
        let d = impute_median(&t).unwrap();
        assert_eq!(d.features[1][0], 2.0); // median of {1,3,2}
        assert_eq!(d.features[2][1], 2.0); // median of {1,2,4}
        assert_eq!(d.column_medians, vec![2.0, 2.0]);
    }

    #[test]
    fn impute_is_idempotent_and_errors_on_empty_column() {
        let t = RawTable::<f64> {
            feature_names: vec!["a".into()],
            cells: vec![vec![None], vec![None]],
            labels: vec![0, 1],
            label_column: "class".into(),
            positive_label: "1".into(),
            negative_label: "0".into(),
        };
        assert!(impute_median(&t).is_err());

        let t2 = RawTable::<f64> {
            feature_names: vec!["a".into()],
            cells: vec![vec![Some(1.0)], vec![None], vec![Some(3.0)]],
            labels: vec![0, 1, 0],
            label_column: "class".into(),
            positive_label: "1".into(),
            negative_label: "0".into(),
        };
        let once = impute_median(&t2).unwrap();
        let again = RawTable::<f64> {
            feature_names: t2.feature_names.clone(),
            cells: once
                .features
                .iter()
                .map(|r| r.iter().map(|&v| Some(v)).collect())
                .collect(),
            labels: t2.labels.clone(),
            label_column: t2.label_column.clone(),
            positive_label: t2.positive_label.clone(),
            negative_label: t2.negative_label.clone(),
        };
        let twice = impute_median(&again).unwrap();
        assert_eq!(once.features, twice.features);
    }

    #[test]
    fn perturb_touches_exactly_the_first_k_shuffled_rows() {
        let data = toy_dataset(
            (0..10).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect(),
            vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1],
        );
        let spec = PerturbationSpec { delta: 0.5, seed: 9 };
        let out = perturb(&data, &spec).unwrap();
        assert_eq!(out.n_perturbed, 5);
        assert_eq!(out.touched.len(), 5);

        // Compare against the same shuffle without perturbation.
        let clean = perturb(&data, &PerturbationSpec { delta: 0.0, seed: 9 }).unwrap();
        let mut rows_differing = 0;
        for i in 0..10 {
            if out.data.features[i] != clean.data.features[i] {
                rows_differing += 1;
                assert!(i < 5, "row {i} beyond the perturbed prefix changed");
                let diff_cells = out.data.features[i]
                    .iter()
                    .zip(&clean.data.features[i])
                    .filter(|(a, b)| a != b)
                    .count();
                assert_eq!(diff_cells, 1);
            }
        }
        assert!(rows_differing <= 5);
        assert_eq!(out.data.labels, clean.data.labels);
    }

    #[test]
    fn perturb_zero_delta_only_shuffles() {
        let data = toy_dataset(
            (0..12).map(|i| vec![i as f64]).collect(),
            vec![0; 12],
        );
        let out = perturb(&data, &PerturbationSpec { delta: 0.0, seed: 3 }).unwrap();
        assert_eq!(out.n_perturbed, 0);
        let mut sorted: Vec<f64> = out.data.features.iter().map(|r| r[0]).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(sorted, (0..12).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn perturb_full_delta_single_column() {
        let data = toy_dataset((0..6).map(|i| vec![i as f64]).collect(), vec![0; 6]);
        let out = perturb(&data, &PerturbationSpec { delta: 1.0, seed: 1 }).unwrap();
        let med = median(&(0..6).map(|i| i as f64).collect::<Vec<_>>());
        assert!(out.data.features.iter().all(|r| r[0] == med));
    }

    #[test]
    fn perturb_recomputes_replacement_medians() {
        // Replacement values come from the current feature matrix, not the
        // stored column_medians (which record the pre-imputation values and
        // may be stale on a hand-built dataset).
        let mut data = toy_dataset(vec![vec![1.0], vec![2.0], vec![4.0]], vec![0, 1, 0]);
        data.column_medians = vec![99.0];
        let out = perturb(&data, &PerturbationSpec { delta: 1.0, seed: 5 }).unwrap();
        assert!(out.data.features.iter().all(|r| r[0] == 2.0));
        assert_eq!(out.data.column_medians, vec![99.0]);
    }

    #[test]
    fn perturb_rejects_invalid_delta() {
        let data = toy_dataset(vec![vec![0.0]], vec![0]);
        assert!(perturb(&data, &PerturbationSpec { delta: 1.5, seed: 0 }).is_err());
        assert!(perturb(&data, &PerturbationSpec { delta: -0.1, seed: 0 }).is_err());
    }

    #[test]
    fn perturb_is_deterministic() {
        let data = toy_dataset(
            (0..30).map(|i| vec![i as f64, (i % 7) as f64, (i % 3) as f64]).collect(),
            (0..30).map(|i| (i % 2) as u8).collect(),
        );
        let spec = PerturbationSpec { delta: 0.4, seed: 77 };
        let a = perturb(&data, &spec).unwrap();
        let b = perturb(&data, &spec).unwrap();
        assert_eq!(a.data.features, b.data.features);
        assert_eq!(a.touched, b.touched);
    }

    #[test]
    fn split_sizes_follow_8_1_1() {
        let make = |n: usize| {
            toy_dataset(
                (0..n).map(|i| vec![i as f64]).collect(),
                (0..n).map(|i| (i % 2) as u8).collect(),
            )
        };
        let s = split_8_1_1(&make(100), 0).unwrap();
        assert_eq!((s.train_idx.len(), s.val_idx.len(), s.test_idx.len()), (80, 10, 10));
        let s = split_8_1_1(&make(155), 0).unwrap();
        assert_eq!((s.train_idx.len(), s.val_idx.len(), s.test_idx.len()), (124, 15, 16));
        let s = split_8_1_1(&make(699), 0).unwrap();
        assert_eq!((s.train_idx.len(), s.val_idx.len(), s.test_idx.len()), (559, 69, 71));
        assert!(split_8_1_1(&make(9), 0).is_err());
    }

    #[test]
    fn split_partitions_all_indices_and_is_deterministic() {
        let data = toy_dataset(
            (0..57).map(|i| vec![i as f64]).collect(),
            (0..57).map(|i| (i % 2) as u8).collect(),
        );
        for seed in 0..20u64 {
            let s = split_8_1_1(&data, seed).unwrap();
            let mut all: Vec<usize> = s
                .train_idx
                .iter()
                .chain(&s.val_idx)
                .chain(&s.test_idx)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..57).collect::<Vec<_>>());
            assert_eq!(s, split_8_1_1(&data, seed).unwrap());
        }
    }

    #[test]
    fn standardize_uses_train_population_stats() {
        // Train column {0,2}: mean 1, population std 1 → values {-1,+1}.
        let data = toy_dataset(
            vec![
                vec![0.0, 5.0],
                vec![2.0, 5.0],
                vec![4.0, 5.0],
            ],
            vec![0, 1, 1],
        );
        let split = SplitBundle {
            train_idx: vec![0, 1],
            val_idx: vec![],
            test_idx: vec![2],
        };
        let out = standardize(&data, &split);
        assert_eq!(out.features[0][0], -1.0);
        assert_eq!(out.features[1][0], 1.0);
        // Test row transformed with train stats: (4 - 1) / 1 = 3.
        assert_eq!(out.features[2][0], 3.0);
        // Constant train column: centered only.
        assert_eq!(out.features[0][1], 0.0);
        assert_eq!(out.features[2][1], 0.0);
        let stats = out.standardization.unwrap();
        assert_eq!(stats.means, vec![1.0, 5.0]);
        assert_eq!(stats.stds[0], 1.0);
    }

    #[test]
    fn prepared_artifacts_round_trip_bit_exactly() {
        let dir = std::env::temp_dir().join(format!("prepared_rt_{}", std::process::id()));
        let data = toy_dataset(
            vec![
                vec![0.1, -2.5],
                vec![0.30000000000000004, 1e-17],
                vec![-7.25, 3.5],
                vec![1.5, 0.0],
                vec![2.5, -1.0],
                vec![3.5, 9.25],
                vec![4.5, 2.0],
                vec![5.5, 1.0],
                vec![6.5, -3.0],
                vec![7.5, 4.0],
            ],
            vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1],
        );
        let split = split_8_1_1(&data, 11).unwrap();
        let out = standardize(&data, &split);
        let meta = PreparedMeta {
            format: PREPARED_FORMAT.to_string(),
            source: "toy".into(),
            label_column: "class".into(),
            positive_label: "1".into(),
            negative_label: "0".into(),
            delta: 0.0,
            perturb_seed: 1,
            split_seed: 11,
            n_rows: out.n_rows(),
            n_features: out.n_features(),
            n_perturbed: 0,
            column_medians: out.column_medians.clone(),
            standardization: out.standardization.clone().unwrap(),
            split: split.clone(),
        };
        save_prepared(&dir, &out, &meta).unwrap();
        let first = fs::read(dir.join(PREPARED_DATA_FILE)).unwrap();
        save_prepared(&dir, &out, &meta).unwrap();
        let second = fs::read(dir.join(PREPARED_DATA_FILE)).unwrap();
        assert_eq!(first, second);

        let (reloaded, meta2) = load_prepared(&dir).unwrap();
        assert_eq!(reloaded.features, out.features);
        assert_eq!(reloaded.labels, out.labels);
        assert_eq!(meta2.split, split);
        fs::remove_dir_all(dir).ok();
    }
}
