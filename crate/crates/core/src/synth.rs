//! Deterministic synthetic stand-ins for the four benchmark tables.
//!
//! The real clinical files are not shipped with the crate, so tests and the
//! example configs run against generated tables that match each original's
//! shape: row and column counts, label coding, class balance, value ranges,
//! and missing-cell placement. Two row models cover the tables: a shared
//! latent severity score driving every informative column, and a burst model
//! where each positive row elevates one column pair while negative rows stay
//! low apart from occasional single-column spikes. The burst model reproduces
//! the texture of cytology tables, where evidence concentrates in a different
//! column subset per case, so knocking out a single column genuinely costs a
//! model that reads raw values.
//!
//! Generation order per row is fixed: class draw, the model's row draws,
//! label-flip draw, then per column one noise draw and one missing draw. The
//! committed files under `data/synthetic/` must stay byte-identical to the
//! generator output; a test enforces that.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::rng::rng_from;

#[derive(Clone, Copy, Debug)]
pub enum ColumnKind {
    /// Integers in lo..=hi (cytology scores, counts, quantized labs).
    Int { lo: i64, hi: i64 },
    /// Continuous values rounded to `decimals`.
    Float { lo: f64, hi: f64, decimals: u32 },
    /// Two-valued column written as one of the two integers.
    Binary { a: i64, b: i64 },
}

#[derive(Clone, Debug)]
pub struct ColumnSpec {
    pub name: &'static str,
    pub kind: ColumnKind,
    /// Correlation with the latent severity; negative flips direction,
    /// zero is pure noise.
    pub signal: f64,
    /// Per-column probability of writing `?` instead of the value.
    pub missing_rate: f64,
}

/// How one row's feature values are produced from its class.
#[derive(Clone, Debug)]
pub enum RowModel {
    /// One latent severity score drives every column through its `signal`
    /// weight. `latent_noise` is the within-class spread of the latent;
    /// together with the class separation of 2.0 it fixes how separable the
    /// table can ever be.
    SharedLatent { latent_noise: f64 },
    /// Positive rows draw a severity and elevate one column pair chosen by
    /// `weights`; the remaining columns get only a mild severity tint scaled
    /// by their `signal`. Negative rows stay near the bottom of the range
    /// except that with probability `spike_rate` one uniformly chosen column
    /// spikes high, and with probability `cross_rate` one column from each of
    /// two different pairs spikes, so neither a single high column nor the
    /// plain sum of high columns can decide a row on its own.
    BurstPairs {
        pairs: &'static [[usize; 2]],
        weights: &'static [f64],
        spike_rate: f64,
        cross_rate: f64,
    },
}

#[derive(Clone, Debug)]
pub struct StandinSpec {
    pub name: &'static str,
    pub file_name: &'static str,
    pub n_rows: usize,
    pub label_column: &'static str,
    pub positive_label: &'static str,
    pub negative_label: &'static str,
    pub positive_rate: f64,
    /// Probability of flipping the written label after the features are
    /// generated; sets the irreducible error of the table.
    pub label_noise: f64,
    pub model: RowModel,
    pub seed: u64,
    pub columns: Vec<ColumnSpec>,
}

fn col(name: &'static str, kind: ColumnKind, signal: f64) -> ColumnSpec {
    ColumnSpec { name, kind, signal, missing_rate: 0.0 }
}

fn col_missing(name: &'static str, kind: ColumnKind, signal: f64, missing_rate: f64) -> ColumnSpec {
    ColumnSpec { name, kind, signal, missing_rate }
}

/// 699×9 cytology table, integer scores 1..10, labels 4 (positive) / 2,
/// missing cells concentrated in one column like the original. Positive rows
/// elevate one of three column pairs (size/shape, adhesion/nuclei,
/// chromatin/nucleoli stand-ins), so the evidence for a case sits in two
/// columns and the rest only hint.
pub fn wbc_like() -> StandinSpec {
    use ColumnKind::Int;
    let score = Int { lo: 1, hi: 10 };
    StandinSpec {
        name: "wbc",
        file_name: "wbc_like.csv",
        n_rows: 699,
        label_column: "class",
        positive_label: "4",
        negative_label: "2",
        positive_rate: 0.345,
        label_noise: 0.015,
        model: RowModel::BurstPairs {
            pairs: &[[0, 1], [2, 3], [4, 5]],
            weights: &[0.38, 0.34, 0.28],
            spike_rate: 0.10,
            cross_rate: 0.05,
        },
        seed: 0x57_42_43,
        columns: vec![
            col("clump_thickness", score, 0.82),
            col("uniformity_cell_size", score, 0.93),
            col("uniformity_cell_shape", score, 0.92),
            col("marginal_adhesion", score, 0.78),
            col("single_epithelial_cell_size", score, 0.80),
            col_missing("bare_nuclei", score, 0.88, 0.023),
            col("bland_chromatin", score, 0.84),
            col("normal_nucleoli", score, 0.80),
            col("mitoses", Int { lo: 1, hi: 10 }, 0.55),
        ],
    }
}

/// 768×8 metabolic table, labels 1 (positive) / 0, weaker signal.
pub fn pima_like() -> StandinSpec {
    use ColumnKind::{Float, Int};
    StandinSpec {
        name: "pima",
        file_name: "pima_like.csv",
        n_rows: 768,
        label_column: "class",
        positive_label: "1",
        negative_label: "0",
        positive_rate: 0.349,
        label_noise: 0.10,
        model: RowModel::SharedLatent { latent_noise: 0.60 },
        seed: 0x50_49_4D,
        columns: vec![
            col("pregnancies", Int { lo: 0, hi: 15 }, 0.18),
            col("glucose", Int { lo: 56, hi: 198 }, 0.62),
            col("blood_pressure", Int { lo: 40, hi: 110 }, 0.16),
            col("skin_thickness", Int { lo: 7, hi: 60 }, 0.24),
            col("insulin", Int { lo: 15, hi: 540 }, 0.34),
            col("bmi", Float { lo: 18.0, hi: 50.0, decimals: 1 }, 0.42),
            col("diabetes_pedigree", Float { lo: 0.08, hi: 2.2, decimals: 3 }, 0.22),
            col("age", Int { lo: 21, hi: 81 }, 0.30),
        ],
    }
}

/// 155×19 mixed binary/lab table, labels 2 (positive, survive) / 1, heavy
/// missingness in the lab columns like the original.
pub fn hepatitis_like() -> StandinSpec {
    use ColumnKind::{Binary, Float, Int};
    let b = Binary { a: 1, b: 2 };
    StandinSpec {
        name: "hepatitis",
        file_name: "hepatitis_like.csv",
        n_rows: 155,
        label_column: "class",
        positive_label: "2",
        negative_label: "1",
        positive_rate: 0.794,
        label_noise: 0.06,
        model: RowModel::SharedLatent { latent_noise: 0.55 },
        seed: 0x48_45_50,
        columns: vec![
            col("age", Int { lo: 10, hi: 78 }, -0.22),
            col("sex", b, 0.08),
            col("steroid", b, 0.10),
            col("antivirals", b, 0.12),
            col("fatigue", b, -0.38),
            col("malaise", b, -0.34),
            col("anorexia", b, -0.26),
            col_missing("liver_big", b, -0.14, 0.06),
            col_missing("liver_firm", b, -0.16, 0.07),
            col("spleen_palpable", b, -0.28),
            col("spiders", b, -0.42),
            col("ascites", b, -0.50),
            col("varices", b, -0.44),
            col_missing("bilirubin", Float { lo: 0.3, hi: 7.6, decimals: 1 }, -0.46, 0.04),
            col_missing("alk_phosphate", Int { lo: 26, hi: 295 }, -0.20, 0.18),
            col_missing("sgot", Int { lo: 14, hi: 420 }, -0.26, 0.03),
            col_missing("albumin", Float { lo: 2.1, hi: 6.4, decimals: 1 }, 0.48, 0.10),
            col_missing("protime", Int { lo: 21, hi: 100 }, 0.40, 0.43),
            col("histology", b, -0.30),
        ],
    }
}

/// 270×13 cardiology table, labels 2 (positive, disease present) / 1.
pub fn heart_like() -> StandinSpec {
    use ColumnKind::{Float, Int};
    StandinSpec {
        name: "heart",
        file_name: "heart_like.csv",
        n_rows: 270,
        label_column: "class",
        positive_label: "2",
        negative_label: "1",
        positive_rate: 0.444,
        label_noise: 0.08,
        model: RowModel::SharedLatent { latent_noise: 0.58 },
        seed: 0x48_52_54,
        columns: vec![
            col("age", Int { lo: 29, hi: 77 }, 0.22),
            col("sex", ColumnKind::Binary { a: 0, b: 1 }, 0.24),
            col("chest_pain", Int { lo: 1, hi: 4 }, 0.44),
            col("resting_bp", Int { lo: 94, hi: 200 }, 0.16),
            col("cholesterol", Int { lo: 126, hi: 409 }, 0.12),
            col("fasting_blood_sugar", ColumnKind::Binary { a: 0, b: 1 }, 0.04),
            col("resting_ecg", Int { lo: 0, hi: 2 }, 0.18),
            col("max_heart_rate", Int { lo: 71, hi: 202 }, -0.46),
            col("exercise_angina", ColumnKind::Binary { a: 0, b: 1 }, 0.42),
            col("oldpeak", Float { lo: 0.0, hi: 6.2, decimals: 1 }, 0.46),
            col("slope", Int { lo: 1, hi: 3 }, 0.34),
            col("major_vessels", Int { lo: 0, hi: 3 }, 0.48),
            col("thal", Int { lo: 3, hi: 7 }, 0.44),
        ],
    }
}

pub fn all_standins() -> Vec<StandinSpec> {
    vec![wbc_like(), pima_like(), hepatitis_like(), heart_like()]
}

/// Renders the full CSV text for one stand-in.
pub fn generate_csv(spec: &StandinSpec) -> String {
    let mut rng = rng_from(spec.seed);
    let unit = Normal::new(0.0, 1.0).unwrap();

    let mut out = String::new();
    for c in &spec.columns {
        out.push_str(c.name);
        out.push(',');
    }
    out.push_str(spec.label_column);
    out.push('\n');

    for _ in 0..spec.n_rows {
        let is_pos = rng.gen_bool(spec.positive_rate);
        let row = match &spec.model {
            RowModel::SharedLatent { latent_noise } => RowDraw::Latent(
                if is_pos { 1.0 } else { -1.0 } + latent_noise * unit.sample(&mut rng),
            ),
            RowModel::BurstPairs { pairs, weights, spike_rate, cross_rate } => {
                if is_pos {
                    let mut pick = rng.gen::<f64>() * weights.iter().sum::<f64>();
                    let mut pair = pairs[pairs.len() - 1];
                    for (i, w) in weights.iter().enumerate() {
                        if pick < *w {
                            pair = pairs[i];
                            break;
                        }
                        pick -= w;
                    }
                    let severity =
                        (1.0 + 0.35 * unit.sample(&mut rng)).clamp(0.3, 1.8);
                    RowDraw::Burst { pair, severity }
                } else {
                    let u = rng.gen::<f64>();
                    if u < *spike_rate {
                        RowDraw::Spike(rng.gen_range(0..spec.columns.len()))
                    } else if u < spike_rate + cross_rate {
                        let a = rng.gen_range(0..pairs.len());
                        let mut b = rng.gen_range(0..pairs.len() - 1);
                        if b >= a {
                            b += 1;
                        }
                        let cols = [
                            pairs[a][usize::from(rng.gen_bool(0.5))],
                            pairs[b][usize::from(rng.gen_bool(0.5))],
                        ];
                        RowDraw::CrossSpike(cols)
                    } else {
                        RowDraw::Quiet
                    }
                }
            }
        };
        let flip = rng.gen_bool(spec.label_noise);

        for (j, c) in spec.columns.iter().enumerate() {
            let noise: f64 = unit.sample(&mut rng);
            let miss = c.missing_rate > 0.0 && rng.gen_bool(c.missing_rate);
            if miss {
                out.push('?');
                out.push(',');
                continue;
            }
            let cell = match row {
                RowDraw::Latent(latent) => {
                    let s = c.signal;
                    let t = s * latent + (1.0 - s * s).max(0.0).sqrt() * noise;
                    render(c.kind, t)
                }
                _ => render_low(c.kind, row.level(j, c.signal) + LOW_BASE_SPREAD * noise.abs()),
            };
            out.push_str(&cell);
            out.push(',');
        }
        let label_pos = is_pos != flip;
        out.push_str(if label_pos { spec.positive_label } else { spec.negative_label });
        out.push('\n');
    }
    out
}

/// Per-row state drawn before the columns are filled in.
#[derive(Clone, Copy)]
enum RowDraw {
    /// Shared-latent severity.
    Latent(f64),
    /// Burst row: this column pair is elevated at the drawn severity.
    Burst { pair: [usize; 2], severity: f64 },
    /// Negative burst-model row with one spiked column.
    Spike(usize),
    /// Negative burst-model row spiking one column in each of two pairs.
    CrossSpike([usize; 2]),
    /// Negative burst-model row with no spike.
    Quiet,
}

/// Bottom-of-range resting level for burst-model columns.
const LOW_BASE: f64 = 1.0;
/// Folded-normal spread around the resting level.
const LOW_BASE_SPREAD: f64 = 1.15;
/// Spike height for negative-row single-column spikes.
const SPIKE_LIFT: f64 = 5.8;
/// Elevated columns sit at `LOW_BASE + ELEVATION_BASE + ELEVATION_GAIN * severity`.
const ELEVATION_BASE: f64 = 3.2;
const ELEVATION_GAIN: f64 = 1.6;
/// Non-elevated columns of a positive row get `signal * TINT_GAIN * severity`.
const TINT_GAIN: f64 = 0.3;

impl RowDraw {
    /// Column level before noise for the burst-model variants.
    fn level(self, j: usize, signal: f64) -> f64 {
        match self {
            RowDraw::Latent(_) => unreachable!("latent rows render through `render`"),
            RowDraw::Burst { pair, severity } => {
                if pair.contains(&j) {
                    LOW_BASE + ELEVATION_BASE + ELEVATION_GAIN * severity
                } else {
                    LOW_BASE + signal * TINT_GAIN * severity
                }
            }
            RowDraw::Spike(col) if col == j => LOW_BASE + SPIKE_LIFT,
            RowDraw::CrossSpike(cols) if cols.contains(&j) => LOW_BASE + SPIKE_LIFT,
            RowDraw::Spike(_) | RowDraw::CrossSpike(_) | RowDraw::Quiet => LOW_BASE,
        }
    }
}

/// Maps an absolute burst-model level onto the column's value range; unlike
/// [`render`] the level is already in value units, not standard deviations.
fn render_low(kind: ColumnKind, level: f64) -> String {
    match kind {
        ColumnKind::Int { lo, hi } => {
            let v = level.round().clamp(lo as f64, hi as f64);
            format!("{}", v as i64)
        }
        ColumnKind::Float { lo, hi, decimals } => {
            format!("{:.*}", decimals as usize, level.clamp(lo, hi))
        }
        ColumnKind::Binary { a, b } => format!("{}", if level > 3.0 { b } else { a }),
    }
}

/// Maps a roughly unit-normal draw onto the column's value range, centering
/// the distribution mid-range with tails clamped at the bounds.
fn render(kind: ColumnKind, t: f64) -> String {
    match kind {
        ColumnKind::Int { lo, hi } => {
            let mid = (lo + hi) as f64 / 2.0;
            let scale = (hi - lo) as f64 / 4.0;
            let v = (mid + scale * t).round().clamp(lo as f64, hi as f64);
            format!("{}", v as i64)
        }
        ColumnKind::Float { lo, hi, decimals } => {
            let mid = (lo + hi) / 2.0;
            let scale = (hi - lo) / 4.0;
            let v = (mid + scale * t).clamp(lo, hi);
            format!("{:.*}", decimals as usize, v)
        }
        ColumnKind::Binary { a, b } => {
            format!("{}", if t > 0.0 { b } else { a })
        }
    }
}

/// Writes every stand-in CSV into `dir`, returning the paths.
pub fn write_standins(dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for spec in all_standins() {
        let path = dir.join(spec.file_name);
        fs::write(&path, generate_csv(&spec))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_csv(&wbc_like());
        let b = generate_csv(&wbc_like());
        assert_eq!(a, b);
    }

    #[test]
    fn standins_match_expected_shapes() {
        for spec in all_standins() {
            let csv = generate_csv(&spec);
            let lines: Vec<&str> = csv.lines().collect();
            assert_eq!(lines.len(), spec.n_rows + 1, "{}", spec.name);
            let cols = lines[0].split(',').count();
            assert_eq!(cols, spec.columns.len() + 1, "{}", spec.name);
        }
    }

    #[test]
    fn standins_parse_through_datakit() {
        let dir = std::env::temp_dir().join(format!("standins_{}", std::process::id()));
        write_standins(&dir).unwrap();
        for spec in all_standins() {
            let table: datakit::RawTable<f64> =
                datakit::load_table(dir.join(spec.file_name), spec.label_column).unwrap();
            assert_eq!(table.cells.len(), spec.n_rows);
            assert_eq!(table.feature_names.len(), spec.columns.len());
            assert_eq!(table.positive_label, spec.positive_label, "{}", spec.name);
            let pos = table.labels.iter().filter(|&&l| l == 1).count() as f64;
            let rate = pos / spec.n_rows as f64;
            assert!(
                (rate - adjusted_rate(&spec)).abs() < 0.06,
                "{}: positive rate {rate}",
                spec.name
            );
            let data = datakit::impute_median(&table).unwrap();
            assert!(data.features.iter().all(|r| r.iter().all(|v| v.is_finite())));
        }
        std::fs::remove_dir_all(dir).ok();
    }

    fn adjusted_rate(spec: &StandinSpec) -> f64 {
        spec.positive_rate * (1.0 - spec.label_noise) + (1.0 - spec.positive_rate) * spec.label_noise
    }

    #[test]
    fn wbc_like_missing_cells_land_in_one_column() {
        let csv = generate_csv(&wbc_like());
        for (i, line) in csv.lines().skip(1).enumerate() {
            for (j, cell) in line.split(',').enumerate() {
                if cell == "?" {
                    assert_eq!(j, 5, "row {i}: missing cell outside bare_nuclei");
                }
            }
        }
        let missing = csv.matches('?').count();
        assert!(missing > 4 && missing < 40, "missing count {missing}");
    }
}
