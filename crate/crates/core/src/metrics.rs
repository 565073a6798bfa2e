//! Confusion-matrix metrics (including negative predictive value) and
//! probabilistic-label binarization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ClassDistribution, ClassLabel, GroundTruthSet, PseudoLabelSet};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty input: nothing to score")]
    EmptyInput,
    #[error("id misalignment at row {index}: predictions have '{left}', reference has '{right}'")]
    IdMisalignment {
        index: usize,
        left: String,
        right: String,
    },
    #[error("predictions have {left} rows, reference has {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("threshold {threshold} outside the open interval (0, 1)")]
    InvalidThreshold { threshold: f64 },
}

/// Counts of a binary contingency table; Positive is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positive: u64,
    pub false_positive: u64,
    pub true_negative: u64,
    pub false_negative: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

/// The five evaluation metrics. A `None` marks an undefined (0/0) ratio; it is
/// serialized as JSON null and rendered as `n/a`, never as a silent 0 or NaN.
///
/// Field order matches the rendered table's column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub npv: Option<f64>,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Tallies predictions against a reference; ids must align positionally.
pub fn confusion(
    preds: &GroundTruthSet,
    reference: &GroundTruthSet,
) -> Result<ConfusionMatrix, MetricsError> {
    if preds.is_empty() || reference.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if preds.len() != reference.len() {
        return Err(MetricsError::LengthMismatch {
            left: preds.len(),
            right: reference.len(),
        });
    }
    for (index, (left, right)) in preds
        .location_ids()
        .iter()
        .zip(reference.location_ids())
        .enumerate()
    {
        if left != right {
            return Err(MetricsError::IdMisalignment {
                index,
                left: left.to_string(),
                right: right.to_string(),
            });
        }
    }
    let mut cm = ConfusionMatrix {
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
    };
    for (pred, truth) in preds.labels().iter().zip(reference.labels()) {
        match (pred, truth) {
            (ClassLabel::Positive, ClassLabel::Positive) => cm.true_positive += 1,
            (ClassLabel::Positive, ClassLabel::Negative) => cm.false_positive += 1,
            (ClassLabel::Negative, ClassLabel::Negative) => cm.true_negative += 1,
            (ClassLabel::Negative, ClassLabel::Positive) => cm.false_negative += 1,
        }
    }
    Ok(cm)
}

fn ratio(numerator: u64, denominator: u64) -> Option<f64> {
    (denominator > 0).then(|| numerator as f64 / denominator as f64)
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let precision = ratio(cm.true_positive, cm.true_positive + cm.false_positive);
    let recall = ratio(cm.true_positive, cm.true_positive + cm.false_negative);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    Ok(MetricsReport {
        npv: ratio(cm.true_negative, cm.true_negative + cm.false_negative),
        recall,
        precision,
        f1,
        accuracy: Some((cm.true_positive + cm.true_negative) as f64 / total as f64),
    })
}

/// Commits a probabilistic label at `threshold`; a tie goes Positive.
pub fn binarize(
    distribution: &ClassDistribution,
    threshold: f64,
) -> Result<ClassLabel, MetricsError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MetricsError::InvalidThreshold { threshold });
    }
    Ok(if distribution.p_pos() >= threshold {
        ClassLabel::Positive
    } else {
        ClassLabel::Negative
    })
}

/// Binarizes a whole pseudo-label set, preserving order.
pub fn binarize_all(
    labels: &PseudoLabelSet,
    threshold: f64,
) -> Result<GroundTruthSet, MetricsError> {
    let mut out = Vec::with_capacity(labels.len());
    for dist in labels.distributions() {
        out.push(binarize(dist, threshold)?);
    }
    Ok(GroundTruthSet::new(labels.location_ids().to_vec(), out).expect("aligned"))
}

fn cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.3}"),
        None => "n/a".to_string(),
    }
}

/// Plain-text table with columns NPV, Recall, Precision, F1 Score,
/// Accuracy.
pub fn render_table(rows: &[(String, MetricsReport)]) -> String {
    let name_width = rows
        .iter()
        .map(|(name, _)| name.len())
        .chain(["Approach".len()])
        .max()
        .unwrap_or(8);
    let mut out = format!(
        "{:<name_width$}  {:>7}  {:>7}  {:>9}  {:>8}  {:>8}\n",
        "Approach", "NPV", "Recall", "Precision", "F1 Score", "Accuracy"
    );
    for (name, report) in rows {
        out.push_str(&format!(
            "{:<name_width$}  {:>7}  {:>7}  {:>9}  {:>8}  {:>8}\n",
            name,
            cell(report.npv),
            cell(report.recall),
            cell(report.precision),
            cell(report.f1),
            cell(report.accuracy),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LocationId;
    use approx::assert_relative_eq;

    fn gt(ids: &[&str], labels: &[u8]) -> GroundTruthSet {
        GroundTruthSet::new(
            ids.iter().map(|s| LocationId::new(*s).unwrap()).collect(),
            labels
                .iter()
                .map(|&b| {
                    if b == 1 {
                        ClassLabel::Positive
                    } else {
                        ClassLabel::Negative
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_agreement() {
        let reference = gt(&["a", "b", "c", "d"], &[1, 1, 0, 0]);
        let cm = confusion(&reference, &reference).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                true_positive: 2,
                false_positive: 0,
                true_negative: 2,
                false_negative: 0
            }
        );
        let report = compute_metrics(&cm).unwrap();
        for value in [report.npv, report.recall, report.precision, report.f1, report.accuracy] {
            assert_eq!(value, Some(1.0));
        }
    }

    #[test]
    fn hand_counted_confusion() {
        let preds = gt(&["a", "b", "c", "d"], &[1, 1, 0, 0]);
        let reference = gt(&["a", "b", "c", "d"], &[1, 0, 0, 1]);
        let cm = confusion(&preds, &reference).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                true_positive: 1,
                false_positive: 1,
                true_negative: 1,
                false_negative: 1
            }
        );
        let report = compute_metrics(&cm).unwrap();
        for value in [report.npv, report.recall, report.precision, report.f1, report.accuracy] {
            assert_eq!(value, Some(0.5));
        }
    }

    #[test]
    fn empty_and_misaligned_inputs_rejected() {
        let a = gt(&["a"], &[1]);
        let b = gt(&["b"], &[1]);
        assert!(matches!(
            confusion(&a, &b),
            Err(MetricsError::IdMisalignment { index: 0, .. })
        ));
        let empty = GroundTruthSet::new(vec![], vec![]).unwrap();
        assert!(matches!(
            confusion(&empty, &empty),
            Err(MetricsError::EmptyInput)
        ));
    }

    #[test]
    fn swapping_arguments_transposes_errors() {
        let preds = gt(&["a", "b", "c", "d", "e"], &[1, 1, 0, 0, 1]);
        let reference = gt(&["a", "b", "c", "d", "e"], &[1, 0, 0, 1, 0]);
        let ab = confusion(&preds, &reference).unwrap();
        let ba = confusion(&reference, &preds).unwrap();
        assert_eq!(ab.false_positive, ba.false_negative);
        assert_eq!(ab.false_negative, ba.false_positive);
        assert_eq!(
            compute_metrics(&ab).unwrap().accuracy,
            compute_metrics(&ba).unwrap().accuracy
        );
    }

    #[test]
    fn scale_invariance() {
        let cm = ConfusionMatrix {
            true_positive: 3,
            false_positive: 2,
            true_negative: 6,
            false_negative: 1,
        };
        let scaled = ConfusionMatrix {
            true_positive: 30,
            false_positive: 20,
            true_negative: 60,
            false_negative: 10,
        };
        assert_eq!(
            compute_metrics(&cm).unwrap(),
            compute_metrics(&scaled).unwrap()
        );
    }

    #[test]
    fn qwen_single_question_f1() {
        let precision = 0.63;
        let recall = 0.83;
        let f1: f64 = 2.0 * precision * recall / (precision + recall);
        assert_relative_eq!(f1, 1.0458 / 1.46, max_relative = 1e-12);
        assert!((f1 - 0.72).abs() <= 0.015);
    }

    #[test]
    fn undefined_ratios_are_explicit() {
        // No positive predictions: precision and f1 are undefined, not 0.
        let cm = ConfusionMatrix {
            true_positive: 0,
            false_positive: 0,
            true_negative: 3,
            false_negative: 2,
        };
        let report = compute_metrics(&cm).unwrap();
        assert_eq!(report.precision, None);
        assert_eq!(report.f1, None);
        assert_eq!(report.recall, Some(0.0));
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.starts_with(r#"{"npv":"#));
        assert!(json.contains(r#""precision":null"#));
        assert!(render_table(&[("x".into(), report)]).contains("n/a"));
    }

    #[test]
    fn binarize_rules() {
        let tie = ClassDistribution::new(0.5, 0.5).unwrap();
        assert_eq!(binarize(&tie, 0.5).unwrap(), ClassLabel::Positive);
        let low = ClassDistribution::new(0.9, 0.1).unwrap();
        assert_eq!(binarize(&low, 0.5).unwrap(), ClassLabel::Negative);
        let high = ClassDistribution::new(0.2, 0.8).unwrap();
        assert_eq!(binarize(&high, 0.9).unwrap(), ClassLabel::Negative);
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(
                binarize(&tie, bad),
                Err(MetricsError::InvalidThreshold { .. })
            ));
        }
    }
}
