//! Scoring decoded paths against ground truth and paradigm comparison.
//!
//! Metrics are one-vs-rest per activity. Test labels are never transformed by
//! a paradigm: paradigm-generated predictions on annotated test samples count
//! against the true class and land in a dedicated not-an-activity bucket.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hmm::{estimate, viterbi_decode, HmmError};
use crate::label::Label;
use crate::paradigms::{
    apply_paradigm, project_to_ground_truth, LabelSpace, Paradigm, ParadigmError, Projection,
    SemanticRule,
};
use crate::sampling::{chronological_split, SampleSeries, SamplingError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Bucket for predictions that project to no base activity.
pub const NOT_AN_ACTIVITY: &str = "NotAnActivity";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("truth and prediction lengths differ: {truth} vs {predicted}")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("activity {0:?} is not among the evaluated classes")]
    UnknownActivity(String),
    #[error("no paradigms requested")]
    NoParadigms,
    #[error(transparent)]
    Paradigm(#[from] ParadigmError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
}

/// Square matrix of (true class, predicted class) sample counts over the
/// evaluated test samples. The last class is the not-an-activity bucket.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<u64>,
    pub evaluated_total: u64,
}

impl ConfusionMatrix {
    pub fn class_index(&self, activity: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == activity)
    }

    pub fn count(&self, true_class: usize, predicted_class: usize) -> u64 {
        self.counts[true_class * self.classes.len() + predicted_class]
    }

    /// Base activity classes, excluding the bucket.
    pub fn activities(&self) -> &[String] {
        &self.classes[..self.classes.len() - 1]
    }
}

/// One-vs-rest counts and the four derived metrics for one activity.
/// Zero-denominator metrics are `None`, rendered "n/a".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub activity: String,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub accuracy: Option<f64>,
    pub specificity: Option<f64>,
}

fn ratio(num: u64, denom: u64) -> Option<f64> {
    if denom == 0 {
        None
    } else {
        Some(num as f64 / denom as f64)
    }
}

pub fn format_metric(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => "n/a".into(),
    }
}

/// Builds the confusion matrix over test indices with non-Null ground truth,
/// projecting predictions through [`project_to_ground_truth`].
pub fn confusion(
    truth: &[Label],
    predicted: &[Label],
    space: &LabelSpace,
) -> Result<ConfusionMatrix, EvalError> {
    let mut classes: BTreeSet<String> = space.base_activities.iter().cloned().collect();
    for label in truth {
        if let Label::Activity(name) = label {
            classes.insert(name.clone());
        }
    }
    confusion_with_classes(classes.into_iter().collect(), truth, predicted, space)
}

/// As [`confusion`], with a caller-pinned class list so that every paradigm in
/// a comparison tabulates over identical classes.
pub fn confusion_with_classes(
    activities: Vec<String>,
    truth: &[Label],
    predicted: &[Label],
    space: &LabelSpace,
) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    let mut classes = activities;
    classes.push(NOT_AN_ACTIVITY.to_string());
    let k = classes.len();
    let index = |name: &str| classes.iter().position(|c| c == name);
    let mut counts = vec![0u64; k * k];
    let mut total = 0u64;
    for (t, p) in truth.iter().zip(predicted) {
        let Label::Activity(true_name) = t else {
            continue; // Null (and any non-activity truth) is not evaluated
        };
        let ti = index(true_name).ok_or_else(|| EvalError::UnknownActivity(true_name.clone()))?;
        let pi = match project_to_ground_truth(space, p)? {
            Projection::Activity(name) => {
                index(&name).ok_or_else(|| EvalError::UnknownActivity(name.clone()))?
            }
            Projection::NotAnActivity => k - 1,
        };
        counts[ti * k + pi] += 1;
        total += 1;
    }
    Ok(ConfusionMatrix {
        classes,
        counts,
        evaluated_total: total,
    })
}

fn one_vs_rest(cm: &ConfusionMatrix, activity: &str) -> Result<(u64, u64, u64, u64), EvalError> {
    let a = cm
        .class_index(activity)
        .ok_or_else(|| EvalError::UnknownActivity(activity.to_string()))?;
    let k = cm.classes.len();
    let tp = cm.count(a, a);
    let fn_: u64 = (0..k).filter(|&j| j != a).map(|j| cm.count(a, j)).sum();
    let fp: u64 = (0..k).filter(|&i| i != a).map(|i| cm.count(i, a)).sum();
    let tn = cm.evaluated_total - tp - fn_ - fp;
    Ok((tp, fp, tn, fn_))
}

pub fn recall(cm: &ConfusionMatrix, activity: &str) -> Result<Option<f64>, EvalError> {
    let (tp, _, _, fn_) = one_vs_rest(cm, activity)?;
    Ok(ratio(tp, tp + fn_))
}

pub fn precision(cm: &ConfusionMatrix, activity: &str) -> Result<Option<f64>, EvalError> {
    let (tp, fp, _, _) = one_vs_rest(cm, activity)?;
    Ok(ratio(tp, tp + fp))
}

pub fn accuracy(cm: &ConfusionMatrix, activity: &str) -> Result<Option<f64>, EvalError> {
    let (tp, fp, tn, fn_) = one_vs_rest(cm, activity)?;
    Ok(ratio(tp + tn, tp + tn + fp + fn_))
}

pub fn specificity(cm: &ConfusionMatrix, activity: &str) -> Result<Option<f64>, EvalError> {
    let (_, fp, tn, _) = one_vs_rest(cm, activity)?;
    Ok(ratio(tn, tn + fp))
}

pub fn class_metrics(cm: &ConfusionMatrix, activity: &str) -> Result<ClassMetrics, EvalError> {
    let (tp, fp, tn, fn_) = one_vs_rest(cm, activity)?;
    Ok(ClassMetrics {
        activity: activity.to_string(),
        tp,
        fp,
        tn,
        fn_,
        recall: ratio(tp, tp + fn_),
        precision: ratio(tp, tp + fp),
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        specificity: ratio(tn, tn + fp),
    })
}

/// One paradigm to run in a comparison.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParadigmConfig {
    pub paradigm: Paradigm,
    #[serde(default)]
    pub rules: Vec<SemanticRule>,
}

impl ParadigmConfig {
    pub fn new(paradigm: Paradigm) -> ParadigmConfig {
        ParadigmConfig {
            paradigm,
            rules: Vec::new(),
        }
    }

    pub fn with_rules(paradigm: Paradigm, rules: Vec<SemanticRule>) -> ParadigmConfig {
        ParadigmConfig { paradigm, rules }
    }
}

/// Per-paradigm results within one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParadigmRun {
    pub paradigm: Paradigm,
    pub n_states: usize,
    /// Labels the paradigm added to the state space (N* for P3/Hybrid).
    pub realized_extra_labels: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub evaluated_samples: u64,
    pub confusion: ConfusionMatrix,
    pub metrics: Vec<ClassMetrics>,
    /// Mean one-vs-rest accuracy over classes where it is defined.
    pub mean_accuracy: Option<f64>,
}

/// Machine-readable comparison across paradigms on one shared split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub dataset_digest: String,
    pub delta_t_us: i64,
    pub train_fraction: f64,
    pub smoothing_alpha: f64,
    pub config_echo: Vec<(String, String)>,
    pub runs: Vec<ParadigmRun>,
}

/// Runs every requested paradigm against one identical chronological split.
/// Only the training half is transformed; test labels stay raw ground truth.
pub fn compare_paradigms(
    series: &SampleSeries,
    train_fraction: f64,
    configs: &[ParadigmConfig],
    alpha: f64,
    dataset_digest: &str,
) -> Result<ComparisonReport, EvalError> {
    if configs.is_empty() {
        return Err(EvalError::NoParadigms);
    }
    let (train, test) = chronological_split(series, train_fraction)?;
    let test_obs = test.codes();
    let truth: Vec<Label> = test.labels().cloned().collect();

    // Shared class list: every activity appearing anywhere in the series,
    // sorted for deterministic output.
    let classes: Vec<String> = series
        .labels()
        .filter_map(|l| match l {
            Label::Activity(name) => Some(name.clone()),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut runs = Vec::new();
    for config in configs {
        let (transformed, space) = apply_paradigm(&train, config.paradigm, &config.rules)?;
        let model = estimate(&transformed, &space, alpha)?;
        let decoded = viterbi_decode(&model, &test_obs)?;
        let predicted: Vec<Label> = decoded.labels(&model).into_iter().cloned().collect();
        let cm = confusion_with_classes(classes.clone(), &truth, &predicted, &space)?;
        let metrics: Vec<ClassMetrics> = cm
            .activities()
            .iter()
            .map(|a| class_metrics(&cm, a))
            .collect::<Result<_, _>>()?;
        for m in &metrics {
            debug_assert_eq!(m.tp + m.fp + m.tn + m.fn_, cm.evaluated_total);
        }
        let defined: Vec<f64> = metrics.iter().filter_map(|m| m.accuracy).collect();
        let mean_accuracy = if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        };
        runs.push(ParadigmRun {
            paradigm: config.paradigm,
            n_states: space.total_states(),
            realized_extra_labels: space.extra_labels.len(),
            train_samples: transformed.len(),
            test_samples: test.len(),
            evaluated_samples: cm.evaluated_total,
            confusion: cm,
            metrics,
            mean_accuracy,
        });
    }
    Ok(ComparisonReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset_digest: dataset_digest.to_string(),
        delta_t_us: series.delta_t_us,
        train_fraction,
        smoothing_alpha: alpha,
        config_echo: Vec::new(),
        runs,
    })
}

impl ComparisonReport {
    pub fn run(&self, paradigm: Paradigm) -> Option<&ParadigmRun> {
        self.runs.iter().find(|r| r.paradigm == paradigm)
    }

    /// Per-class rows, per-paradigm sections; deterministic byte-for-byte for
    /// identical inputs.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("paradigm,activity,tp,fp,tn,fn,recall,precision,accuracy,specificity\n");
        for run in &self.runs {
            for m in &run.metrics {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    run.paradigm,
                    m.activity,
                    m.tp,
                    m.fp,
                    m.tn,
                    m.fn_,
                    format_metric(m.recall),
                    format_metric(m.precision),
                    format_metric(m.accuracy),
                    format_metric(m.specificity),
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable table for standard output.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "dataset digest: {}  delta_t: {:.3}s  split: {:.0}/{:.0}  alpha: {}",
            &self.dataset_digest[..self.dataset_digest.len().min(12)],
            self.delta_t_us as f64 / 1e6,
            self.train_fraction * 100.0,
            (1.0 - self.train_fraction) * 100.0,
            self.smoothing_alpha
        );
        for run in &self.runs {
            let _ = writeln!(
                out,
                "\nparadigm {}  (states: {}, paradigm labels: {}, train: {}, test: {}, evaluated: {})",
                run.paradigm,
                run.n_states,
                run.realized_extra_labels,
                run.train_samples,
                run.test_samples,
                run.evaluated_samples
            );
            let _ = writeln!(
                out,
                "  {:<20} {:>8} {:>9} {:>9} {:>11}",
                "activity", "recall", "precision", "accuracy", "specificity"
            );
            for m in &run.metrics {
                let _ = writeln!(
                    out,
                    "  {:<20} {:>8} {:>9} {:>9} {:>11}",
                    m.activity,
                    format_metric(m.recall),
                    format_metric(m.precision),
                    format_metric(m.accuracy),
                    format_metric(m.specificity),
                );
            }
            let _ = writeln!(
                out,
                "  mean one-vs-rest accuracy: {}",
                format_metric(run.mean_accuracy)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::MICROS_PER_SEC;
    use crate::label::Boundary;
    use crate::sampling::{LabeledSample, ObservationCode};

    fn space(base: &[&str], paradigm: Paradigm) -> LabelSpace {
        LabelSpace {
            base_activities: base.iter().map(|s| s.to_string()).collect(),
            extra_labels: match paradigm {
                Paradigm::P2 => vec![Label::Unknown],
                _ => vec![],
            },
            paradigm,
        }
    }

    #[test]
    fn perfect_prediction_is_diagonal() {
        let sp = space(&["A", "B"], Paradigm::P1);
        let truth = vec![Label::activity("A"), Label::activity("B")];
        let cm = confusion(&truth, &truth, &sp).unwrap();
        assert_eq!(cm.evaluated_total, 2);
        let a = cm.class_index("A").unwrap();
        let b = cm.class_index("B").unwrap();
        assert_eq!(cm.count(a, a), 1);
        assert_eq!(cm.count(b, b), 1);
        assert_eq!(cm.count(a, b), 0);
    }

    #[test]
    fn null_truth_skipped_and_gap_bucketed() {
        let sp = space(&["A", "B"], Paradigm::P3);
        let truth = vec![Label::activity("A"), Label::Null, Label::activity("B")];
        let gap = Label::gap(
            Boundary::Activity("A".into()),
            Boundary::Activity("B".into()),
        );
        let pred = vec![Label::activity("A"), gap, Label::activity("A")];
        let cm = confusion(&truth, &pred, &sp).unwrap();
        assert_eq!(cm.evaluated_total, 2);
        let a = cm.class_index("A").unwrap();
        let b = cm.class_index("B").unwrap();
        assert_eq!(cm.count(a, a), 1);
        assert_eq!(cm.count(b, a), 1);
    }

    #[test]
    fn random_vectors_match_naive_tally() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let names = ["A", "B", "C"];
        let sp = space(&names, Paradigm::P2);
        let truth: Vec<Label> = (0..1000)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    Label::Null
                } else {
                    Label::activity(names[rng.gen_range(0..3)])
                }
            })
            .collect();
        let pred: Vec<Label> = (0..1000)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    Label::Unknown
                } else {
                    Label::activity(names[rng.gen_range(0..3)])
                }
            })
            .collect();
        let cm = confusion(&truth, &pred, &sp).unwrap();

        // Independent per-index tally.
        let mut expected = vec![0u64; 16];
        let idx = |l: &Label| -> Option<usize> {
            match l {
                Label::Activity(n) => Some(names.iter().position(|x| x == n).unwrap()),
                Label::Unknown => Some(3),
                _ => None,
            }
        };
        let mut total = 0;
        for (t, p) in truth.iter().zip(&pred) {
            let (Some(ti), Some(pi)) = (idx(t), idx(p)) else {
                if idx(t).is_some() {
                    unreachable!()
                } else {
                    continue;
                }
            };
            expected[ti * 4 + pi] += 1;
            total += 1;
        }
        assert_eq!(cm.evaluated_total, total);
        for ti in 0..3 {
            for pi in 0..4 {
                assert_eq!(cm.count(ti, pi), expected[ti * 4 + pi], "cell {ti},{pi}");
            }
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let sp = space(&["A"], Paradigm::P1);
        let err = confusion(&[Label::activity("A")], &[], &sp);
        assert!(matches!(err, Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn recall_formula() {
        // TP = 8, FN = 2 for Sleeping.
        let cm = ConfusionMatrix {
            classes: vec!["Sleeping".into(), "Relax".into(), NOT_AN_ACTIVITY.into()],
            counts: vec![8, 2, 0, 0, 5, 0, 0, 0, 0],
            evaluated_total: 15,
        };
        assert_eq!(recall(&cm, "Sleeping").unwrap(), Some(0.8));
    }

    #[test]
    fn zero_denominator_is_undefined() {
        let cm = ConfusionMatrix {
            classes: vec!["A".into(), "B".into(), NOT_AN_ACTIVITY.into()],
            counts: vec![0, 3, 0, 0, 5, 0, 0, 0, 0],
            evaluated_total: 8,
        };
        // A never predicted: TP = 0, FP = 0.
        assert_eq!(precision(&cm, "A").unwrap(), None);
        assert_eq!(format_metric(None), "n/a");
    }

    #[test]
    fn hand_computed_three_class_fixture() {
        // 12 evaluated samples:
        //            pred A  pred B  pred C  bucket
        //   true A       3       1       0       1
        //   true B       0       4       0       0
        //   true C       1       0       2       0
        let cm = ConfusionMatrix {
            classes: vec!["A".into(), "B".into(), "C".into(), NOT_AN_ACTIVITY.into()],
            counts: vec![3, 1, 0, 1, 0, 4, 0, 0, 1, 0, 2, 0, 0, 0, 0, 0],
            evaluated_total: 12,
        };
        let a = class_metrics(&cm, "A").unwrap();
        assert_eq!((a.tp, a.fp, a.tn, a.fn_), (3, 1, 6, 2));
        assert_eq!(a.recall, Some(3.0 / 5.0));
        assert_eq!(a.precision, Some(3.0 / 4.0));
        assert_eq!(a.accuracy, Some(9.0 / 12.0));
        assert_eq!(a.specificity, Some(6.0 / 7.0));
        let b = class_metrics(&cm, "B").unwrap();
        assert_eq!((b.tp, b.fp, b.tn, b.fn_), (4, 1, 7, 0));
        assert_eq!(b.recall, Some(1.0));
        assert_eq!(b.precision, Some(4.0 / 5.0));
        let c = class_metrics(&cm, "C").unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (2, 0, 9, 1));
        assert_eq!(c.specificity, Some(1.0));
        for m in [&a, &b, &c] {
            assert_eq!(m.tp + m.fp + m.tn + m.fn_, 12);
        }
        assert!(matches!(
            recall(&cm, "Nope"),
            Err(EvalError::UnknownActivity(_))
        ));
    }

    fn gapless_series() -> SampleSeries {
        let pattern = [("A", 1u64), ("A", 1), ("B", 2), ("B", 2)];
        let samples: Vec<LabeledSample> = (0..40)
            .map(|k| {
                let (name, code) = pattern[k % 4];
                LabeledSample {
                    timestamp: k as i64 * 7 * MICROS_PER_SEC,
                    code: ObservationCode::new(code, 4),
                    label: Label::activity(name),
                }
            })
            .collect();
        SampleSeries::from_samples(7 * MICROS_PER_SEC, samples)
    }

    #[test]
    fn single_paradigm_report() {
        let series = gapless_series();
        let report = compare_paradigms(
            &series,
            0.6,
            &[ParadigmConfig::new(Paradigm::P1)],
            0.01,
            "digest",
        )
        .unwrap();
        assert_eq!(report.runs.len(), 1);
        assert_eq!(report.runs[0].paradigm, Paradigm::P1);
    }

    #[test]
    fn gapless_series_gives_identical_metrics_across_paradigms() {
        let series = gapless_series();
        let configs = [
            ParadigmConfig::new(Paradigm::P1),
            ParadigmConfig::new(Paradigm::P2),
            ParadigmConfig::new(Paradigm::P3),
            ParadigmConfig::new(Paradigm::Hybrid),
        ];
        let report = compare_paradigms(&series, 0.6, &configs, 0.01, "digest").unwrap();
        let first = &report.runs[0].metrics;
        for run in &report.runs[1..] {
            assert_eq!(&run.metrics, first, "paradigm {}", run.paradigm);
        }
    }

    #[test]
    fn report_rendering_is_deterministic() {
        let series = gapless_series();
        let configs = [
            ParadigmConfig::new(Paradigm::P1),
            ParadigmConfig::new(Paradigm::P2),
        ];
        let a = compare_paradigms(&series, 0.6, &configs, 0.01, "digest").unwrap();
        let b = compare_paradigms(&series, 0.6, &configs, 0.01, "digest").unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.to_csv().starts_with("paradigm,activity,"));
    }

    #[test]
    fn micro_consistency() {
        let sp = space(&["A", "B"], Paradigm::P1);
        let truth = vec![
            Label::activity("A"),
            Label::activity("A"),
            Label::activity("B"),
        ];
        let pred = vec![
            Label::activity("A"),
            Label::activity("B"),
            Label::activity("B"),
        ];
        let cm = confusion(&truth, &pred, &sp).unwrap();
        let correct: u64 = (0..cm.classes.len()).map(|i| cm.count(i, i)).sum();
        assert_eq!(correct, 2);
    }
}
