//! Classification metrics and run statistics: confusion matrices, the four
//! report metrics with explicit undefined markers for 0/0 cases, multi-seed
//! aggregation with sample standard deviations, and a one-tailed Welch t-test
//! backed by a regularized incomplete beta implementation.
//!
//! This module is deliberately `f64`-only: the t-tail is specified to 1e-10
//! accuracy and there is no reason to run report statistics in lower
//! precision.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Exact counts with class 1 positive.
pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    if predictions.is_empty() {
        return Err(CoreError::EmptyInput("confusion over empty inputs".into()));
    }
    if predictions.len() != labels.len() {
        return Err(CoreError::DimensionMismatch(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&p, &y) in predictions.iter().zip(labels) {
        if p > 1 || y > 1 {
            return Err(CoreError::Invalid(format!("non-binary class value {p}/{y}")));
        }
        match (p, y) {
            (1, 1) => cm.tp += 1,
            (1, 0) => cm.fp += 1,
            (0, 0) => cm.tn += 1,
            _ => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Probability → class with the p ≥ 0.5 tie-to-positive convention.
pub fn classify(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= 0.5)).collect()
}

/// `None` marks a 0/0 metric rather than coercing it to 0 or 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricReport {
    MetricReport {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        precision: ratio(cm.tp, cm.tp + cm.fp),
    }
}

/// Mean and sample standard deviation of the defined values of one metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// `None` when fewer than two defined values exist.
    pub std: Option<f64>,
    pub n_defined: usize,
    pub n_undefined: usize,
}

fn summarize(values: &[Option<f64>], name: &str) -> Result<MetricSummary> {
    let defined: Vec<f64> = values.iter().filter_map(|v| *v).collect();
    if defined.is_empty() {
        return Err(CoreError::Degenerate(format!("metric {name} undefined in every run")));
    }
    let n = defined.len();
    let mean = defined.iter().sum::<f64>() / n as f64;
    let std = if n >= 2 {
        let ss: f64 = defined.iter().map(|v| (v - mean).powi(2)).sum();
        Some((ss / (n - 1) as f64).sqrt())
    } else {
        None
    };
    Ok(MetricSummary { mean, std, n_defined: n, n_undefined: values.len() - n })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunAggregate {
    pub reports: Vec<MetricReport>,
    pub accuracy: MetricSummary,
    pub sensitivity: MetricSummary,
    pub specificity: MetricSummary,
    pub precision: MetricSummary,
    pub n_runs: usize,
}

/// Per-metric mean and sample std over seeds, undefined entries excluded
/// with their counts recorded.
pub fn aggregate(reports: &[MetricReport]) -> Result<RunAggregate> {
    if reports.is_empty() {
        return Err(CoreError::EmptyInput("aggregate over zero reports".into()));
    }
    let column = |f: fn(&MetricReport) -> Option<f64>| -> Vec<Option<f64>> {
        reports.iter().map(f).collect()
    };
    Ok(RunAggregate {
        reports: reports.to_vec(),
        accuracy: summarize(&column(|r| r.accuracy), "accuracy")?,
        sensitivity: summarize(&column(|r| r.sensitivity), "sensitivity")?,
        specificity: summarize(&column(|r| r.specificity), "specificity")?,
        precision: summarize(&column(|r| r.precision), "precision")?,
        n_runs: reports.len(),
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub dof: f64,
    /// One-tailed p for mean(a) > mean(b).
    pub p: f64,
}

/// Welch statistic with Welch–Satterthwaite degrees of freedom and the
/// upper-tail p-value from the t-distribution survival function.
pub fn welch_t_one_tailed(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(CoreError::EmptyInput("each sample needs at least 2 values".into()));
    }
    let stats = |s: &[f64]| -> (f64, f64, f64) {
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var, n)
    };
    let (ma, va, na) = stats(a);
    let (mb, vb, nb) = stats(b);
    let sa = va / na;
    let sb = vb / nb;
    if sa + sb <= 0.0 {
        return Err(CoreError::Degenerate("zero combined variance".into()));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let dof = (sa + sb).powi(2) / (sa.powi(2) / (na - 1.0) + sb.powi(2) / (nb - 1.0));
    Ok(WelchResult { t, dof, p: t_sf(t, dof) })
}

/// Survival function P(T > t) of Student's t with `dof` degrees of freedom,
/// via P(T > t) = I_x(ν/2, 1/2)/2 at x = ν/(ν + t²) for t ≥ 0.
pub fn t_sf(t: f64, dof: f64) -> f64 {
    if t < 0.0 {
        return 1.0 - t_sf(-t, dof);
    }
    if t == 0.0 {
        return 0.5;
    }
    let x = dof / (dof + t * t);
    0.5 * betainc_reg(0.5 * dof, 0.5, x)
}

/// Lanczos approximation (g = 7, 9 terms) of ln Γ(z).
pub fn ln_gamma(z: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        // Reflection: Γ(z) Γ(1−z) = π / sin(πz).
        return (std::f64::consts::PI / (std::f64::consts::PI * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// Regularized incomplete beta I_x(a, b) by the symmetric continued-fraction
/// expansion, accurate well past 1e-10 over the parameter ranges the t-tail
/// uses.
pub fn betainc_reg(a: f64, b: f64, x: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "x out of range: {x}");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let front =
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - front * betacf(b, a, 1.0 - x) / b
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn confusion_counts() {
        let cm = confusion(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 2, fp: 0, tn: 1, fn_: 0 });

        let cm = confusion(&[1, 1, 1, 1], &[0, 0, 0, 0]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 0, fp: 4, tn: 0, fn_: 0 });

        assert!(confusion(&[], &[]).is_err());
        assert!(confusion(&[1], &[1, 0]).is_err());
        assert!(confusion(&[2], &[1]).is_err());
    }

    #[test]
    fn classify_threshold_is_inclusive() {
        assert_eq!(classify(&[0.49, 0.5, 0.51, 0.0, 1.0]), vec![0, 1, 1, 0, 1]);
    }

    #[test]
    fn metric_formulas() {
        let r = metrics(&ConfusionMatrix { tp: 3, fp: 0, tn: 0, fn_: 1 });
        assert_eq!(r.sensitivity, Some(0.75));

        let r = metrics(&ConfusionMatrix { tp: 0, fp: 0, tn: 2, fn_: 1 });
        assert_eq!(r.precision, None);
        assert_eq!(r.sensitivity, Some(0.0));

        let r = metrics(&ConfusionMatrix { tp: 5, fp: 0, tn: 5, fn_: 0 });
        assert_eq!(r.accuracy, Some(1.0));
        assert_eq!(r.sensitivity, Some(1.0));
        assert_eq!(r.specificity, Some(1.0));
        assert_eq!(r.precision, Some(1.0));
    }

    #[test]
    fn metrics_exhaustive_small_grid() {
        for tp in 0..=5u64 {
            for fp in 0..=5u64 {
                for tn in 0..=5u64 {
                    for fn_ in 0..=5u64 {
                        let cm = ConfusionMatrix { tp, fp, tn, fn_ };
                        let r = metrics(&cm);
                        let total = tp + fp + tn + fn_;
                        if total == 0 {
                            assert_eq!(r.accuracy, None);
                        } else {
                            assert_eq!(r.accuracy, Some((tp + tn) as f64 / total as f64));
                        }
                        match tp + fn_ {
                            0 => assert_eq!(r.sensitivity, None),
                            d => assert_eq!(r.sensitivity, Some(tp as f64 / d as f64)),
                        }
                        match tn + fp {
                            0 => assert_eq!(r.specificity, None),
                            d => assert_eq!(r.specificity, Some(tn as f64 / d as f64)),
                        }
                        match tp + fp {
                            0 => assert_eq!(r.precision, None),
                            d => assert_eq!(r.precision, Some(tp as f64 / d as f64)),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn swapping_positive_class_swaps_sensitivity_specificity() {
        let mut rng = crate::rng::rng_from(2024);
        for _ in 0..100 {
            let cm = ConfusionMatrix {
                tp: rng.gen_range(0..6),
                fp: rng.gen_range(0..6),
                tn: rng.gen_range(0..6),
                fn_: rng.gen_range(0..6),
            };
            // Relabeling 0↔1 turns tp into tn and fp into fn.
            let swapped = ConfusionMatrix { tp: cm.tn, fp: cm.fn_, tn: cm.tp, fn_: cm.fp };
            let r = metrics(&cm);
            let s = metrics(&swapped);
            assert_eq!(r.sensitivity, s.specificity);
            assert_eq!(r.specificity, s.sensitivity);
            assert_eq!(r.accuracy, s.accuracy);
            // Swapped precision is the original negative predictive value.
            assert_eq!(s.precision, ratio(cm.tn, cm.tn + cm.fn_));
        }
    }

    #[test]
    fn aggregate_mean_and_std() {
        let r = |acc: f64| MetricReport {
            accuracy: Some(acc),
            sensitivity: Some(1.0),
            specificity: Some(1.0),
            precision: Some(1.0),
        };
        let agg = aggregate(&[r(0.9), r(0.9), r(0.9)]).unwrap();
        assert_eq!(agg.accuracy.mean, 0.9);
        assert_eq!(agg.accuracy.std, Some(0.0));

        let agg = aggregate(&[r(0.9), r(1.0)]).unwrap();
        assert!((agg.accuracy.mean - 0.95).abs() < 1e-15);
        assert!((agg.accuracy.std.unwrap() - 0.1 / 2f64.sqrt()).abs() < 1e-12);

        let agg = aggregate(&[r(0.8)]).unwrap();
        assert_eq!(agg.accuracy.mean, 0.8);
        assert_eq!(agg.accuracy.std, None);
        assert_eq!(agg.n_runs, 1);
    }

    #[test]
    fn aggregate_skips_undefined_and_errors_when_all_undefined() {
        let defined = MetricReport {
            accuracy: Some(0.9),
            sensitivity: Some(0.8),
            specificity: Some(0.7),
            precision: Some(0.6),
        };
        let partial = MetricReport { precision: None, ..defined };
        let agg = aggregate(&[defined, partial]).unwrap();
        assert_eq!(agg.precision.n_defined, 1);
        assert_eq!(agg.precision.n_undefined, 1);
        assert_eq!(agg.precision.mean, 0.6);

        let broken = MetricReport { precision: None, ..defined };
        assert!(aggregate(&[broken, broken]).is_err());
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!(ln_gamma(2.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
        // Recurrence Γ(z+1) = zΓ(z).
        for z in [0.3, 1.7, 4.2, 11.5] {
            assert!((ln_gamma(z + 1.0) - (ln_gamma(z) + z.ln())).abs() < 1e-12);
        }
    }

    #[test]
    fn betainc_known_values() {
        for x in [0.0, 0.1, 0.35, 0.7, 1.0] {
            assert!((betainc_reg(1.0, 1.0, x) - x).abs() < 1e-13);
        }
        assert!((betainc_reg(0.5, 0.5, 0.5) - 0.5).abs() < 1e-12);
        // Beta(2,3) CDF at 1/4 = 6x² − 8x³ + 3x⁴ = 0.26171875.
        assert!((betainc_reg(2.0, 3.0, 0.25) - 0.26171875).abs() < 1e-12);
        // Complement identity.
        let mut rng = crate::rng::rng_from(7);
        for _ in 0..50 {
            let a = rng.gen_range(0.3..8.0);
            let b = rng.gen_range(0.3..8.0);
            let x = rng.gen_range(0.01..0.99);
            let s = betainc_reg(a, b, x) + betainc_reg(b, a, 1.0 - x);
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn t_tail_closed_forms() {
        assert_eq!(t_sf(0.0, 3.0), 0.5);
        // ν=1 is Cauchy: P(T>t) = 1/2 − atan(t)/π.
        for t in [0.25f64, 1.0, 3.0] {
            let expect = 0.5 - t.atan() / std::f64::consts::PI;
            assert!((t_sf(t, 1.0) - expect).abs() < 1e-12);
        }
        // ν=2: P(T>t) = 1/2 − t/(2√(2+t²)).
        for t in [0.5f64, 1.0, 2.5] {
            let expect = 0.5 - t / (2.0 * (2.0 + t * t).sqrt());
            assert!((t_sf(t, 2.0) - expect).abs() < 1e-12);
        }
        // Large ν approaches the normal tail.
        assert!((t_sf(1.959_963_985, 1e6) - 0.025).abs() < 1e-4);
        // Symmetry.
        assert!((t_sf(-1.3, 5.0) + t_sf(1.3, 5.0) - 1.0).abs() < 1e-14);
    }

    /// Tail probability by direct quadrature after x = √ν·tan θ, which turns
    /// both the tail and the normalizer into integrals of cos^(ν−1) θ.
    fn t_sf_quadrature(t: f64, dof: f64) -> f64 {
        let f = |theta: f64| theta.cos().powf(dof - 1.0);
        let simpson = |lo: f64, hi: f64| -> f64 {
            let n = 200_000; // even
            let h = (hi - lo) / n as f64;
            let mut acc = f(lo) + f(hi);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * f(lo + i as f64 * h);
            }
            acc * h / 3.0
        };
        let half_pi = std::f64::consts::FRAC_PI_2;
        let lo = (t / dof.sqrt()).atan();
        simpson(lo, half_pi) / simpson(-half_pi, half_pi)
    }

    #[test]
    fn t_tail_matches_quadrature_oracle() {
        let mut rng = crate::rng::rng_from(11);
        for _ in 0..20 {
            let t = rng.gen_range(-3.0..3.0);
            let dof = rng.gen_range(1.5..30.0);
            let got = t_sf(t, dof);
            let want = t_sf_quadrature(t, dof);
            assert!((got - want).abs() < 1e-6, "t={t} dof={dof}: {got} vs {want}");
        }
    }

    #[test]
    fn welch_basic_properties() {
        // Identical samples: t = 0, p = 0.5.
        let r = welch_t_one_tailed(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 0.5);

        // Equal variances and sizes collapse the dof formula to 2(n−1).
        let r = welch_t_one_tailed(&[0.0, 1.0, 2.0], &[5.0, 6.0, 7.0]).unwrap();
        assert!((r.dof - 4.0).abs() < 1e-12);
        assert!(r.p > 0.99);

        // Sharp separation drives p toward zero.
        let r = welch_t_one_tailed(&[1.0, 1.0, 1.000001], &[0.0, 0.0, 1e-6]).unwrap();
        assert!(r.p < 1e-10);

        // Degenerate variance errors out.
        assert!(welch_t_one_tailed(&[1.0, 1.0], &[1.0, 1.0]).is_err());
        assert!(welch_t_one_tailed(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn welch_spec_pair_matches_oracle() {
        let a = [0.95, 0.96, 0.97];
        let b = [0.90, 0.91, 0.92];
        let r = welch_t_one_tailed(&a, &b).unwrap();
        let oracle = t_sf_quadrature(r.t, r.dof);
        assert!((r.p - oracle).abs() < 1e-6);
        assert!(r.p < 0.01);
    }

    #[test]
    fn welch_direction_symmetry() {
        let mut rng = crate::rng::rng_from(13);
        for _ in 0..30 {
            let n = rng.gen_range(3..10);
            let m = rng.gen_range(3..10);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.2)).collect();
            let pab = welch_t_one_tailed(&a, &b).unwrap().p;
            let pba = welch_t_one_tailed(&b, &a).unwrap().p;
            assert!((pab + pba - 1.0).abs() < 1e-9);
        }
    }
}
