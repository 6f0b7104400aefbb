//! Confusion matrices and the binary classification metrics derived from them.
//!
//! Verdicts are hard yes/no answers, so a model has a single operating point
//! and its ROC curve is the polyline `(0,0) -> (FPR, TPR) -> (1,1)`. The AUC is
//! the area under that polyline, `(TPR + 1 - FPR) / 2`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{PartState, RowId};
use crate::parser::{Verdict, VerdictReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
    Fpr,
    Auc,
}

impl Metric {
    pub const ALL: [Metric; 6] =
        [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1, Metric::Fpr, Metric::Auc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
            Metric::Fpr => "fpr",
            Metric::Auc => "auc",
        }
    }

    /// Table rendering: accuracy as a percentage with 2 decimals, the rest with 3.
    pub fn display(self, value: f64) -> String {
        match self {
            Metric::Accuracy => format!("{:.2}", value * 100.0),
            _ => format!("{value:.3}"),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("{0} is undefined for this confusion matrix (zero denominator)")]
    UndefinedMetric(Metric),
    #[error("{verdicts} verdicts but {labels} labels")]
    LengthMismatch { verdicts: usize, labels: usize },
    #[error("verdict for row {0} has no matching label")]
    UnknownRowAlignment(RowId),
    #[error("row {0} appears more than once")]
    DuplicateRow(RowId),
}

/// How abstaining rows enter the confusion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstentionPolicy {
    /// Leave them out of the four cells and count them separately.
    #[default]
    ExcludeAbstain,
    AbstainAsNegative,
    AbstainAsPositive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    /// Rows left out of the four cells.
    pub abstentions: u64,
    pub positive_class: PartState,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64, positive_class: PartState) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn, abstentions: 0, positive_class }
    }

    /// Rows that entered the four cells.
    pub fn scored(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn rows(&self) -> u64 {
        self.scored() + self.abstentions
    }

    /// The same outcomes seen with the other class as positive.
    pub fn with_swapped_positive(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
            abstentions: self.abstentions,
            positive_class: self.positive_class.other(),
        }
    }

    fn record(&mut self, predicted_positive: bool, actual_positive: bool) {
        match (predicted_positive, actual_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Pairs verdicts with labels by row id and tallies the outcomes.
pub fn build_confusion(
    verdicts: &[Verdict],
    labels: &[(RowId, PartState)],
    positive_class: PartState,
    policy: AbstentionPolicy,
) -> Result<ConfusionMatrix, MetricError> {
    if verdicts.len() != labels.len() {
        return Err(MetricError::LengthMismatch { verdicts: verdicts.len(), labels: labels.len() });
    }
    let mut truth: HashMap<&RowId, PartState> = HashMap::with_capacity(labels.len());
    for (row_id, label) in labels {
        if truth.insert(row_id, *label).is_some() {
            return Err(MetricError::DuplicateRow(row_id.clone()));
        }
    }

    let mut cm = ConfusionMatrix::new(0, 0, 0, 0, positive_class);
    let mut seen = std::collections::HashSet::with_capacity(verdicts.len());
    for verdict in verdicts {
        let actual =
            *truth.get(&verdict.row_id).ok_or_else(|| MetricError::UnknownRowAlignment(verdict.row_id.clone()))?;
        if !seen.insert(&verdict.row_id) {
            return Err(MetricError::DuplicateRow(verdict.row_id.clone()));
        }
        let predicted = match (verdict.state.state(), policy) {
            (Some(state), _) => state == positive_class,
            (None, AbstentionPolicy::ExcludeAbstain) => {
                cm.abstentions += 1;
                continue;
            }
            (None, AbstentionPolicy::AbstainAsNegative) => false,
            (None, AbstentionPolicy::AbstainAsPositive) => true,
        };
        cm.record(predicted, actual == positive_class);
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64, metric: Metric) -> Result<f64, MetricError> {
    if den == 0 {
        Err(MetricError::UndefinedMetric(metric))
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// (TP + TN) / (TP + TN + FP + FN)
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    ratio(cm.tp + cm.tn, cm.scored(), Metric::Accuracy)
}

/// TP / (TP + FP)
pub fn precision(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    ratio(cm.tp, cm.tp + cm.fp, Metric::Precision)
}

/// TP / (TP + FN), the true positive rate.
pub fn recall(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    ratio(cm.tp, cm.tp + cm.fn_, Metric::Recall)
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    let undefined = |_| MetricError::UndefinedMetric(Metric::F1);
    let p = precision(cm).map_err(undefined)?;
    let r = recall(cm).map_err(undefined)?;
    if p + r > 0.0 {
        Ok(2.0 * p * r / (p + r))
    } else {
        Ok(0.0)
    }
}

/// FP / (FP + TN)
pub fn fpr(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    ratio(cm.fp, cm.fp + cm.tn, Metric::Fpr)
}

/// Area under the three-point ROC polyline of a hard classifier.
pub fn auc_single_point(cm: &ConfusionMatrix) -> Result<f64, MetricError> {
    let undefined = |_| MetricError::UndefinedMetric(Metric::Auc);
    let tpr = recall(cm).map_err(undefined)?;
    let fpr = fpr(cm).map_err(undefined)?;
    Ok((tpr + 1.0 - fpr) / 2.0)
}

/// `[(0,0), (FPR, TPR), (1,1)]`
pub fn roc_points(cm: &ConfusionMatrix) -> Result<Vec<(f64, f64)>, MetricError> {
    let undefined = |_| MetricError::UndefinedMetric(Metric::Auc);
    let tpr = recall(cm).map_err(undefined)?;
    let fpr = fpr(cm).map_err(undefined)?;
    Ok(vec![(0.0, 0.0), (fpr, tpr), (1.0, 1.0)])
}

/// Metric bundle for one (model, dataset) pair. Undefined metrics are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model_id: String,
    pub dataset_name: String,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub fpr: Option<f64>,
    pub auc: Option<f64>,
    pub abstention_rate: f64,
    #[serde(default)]
    pub abstentions_by_reason: BTreeMap<VerdictReason, u64>,
    #[serde(default)]
    pub roc_points: Vec<(f64, f64)>,
    pub cm: ConfusionMatrix,
}

impl MetricsReport {
    /// Scores a confusion matrix; `total_rows` and the reason breakdown come
    /// from the verdict list since non-excluding policies fold abstentions
    /// into the cells.
    pub fn from_confusion(
        model_id: impl Into<String>,
        dataset_name: impl Into<String>,
        cm: ConfusionMatrix,
        total_rows: u64,
        abstentions_by_reason: BTreeMap<VerdictReason, u64>,
    ) -> Self {
        let abstained: u64 = abstentions_by_reason.values().sum();
        MetricsReport {
            model_id: model_id.into(),
            dataset_name: dataset_name.into(),
            accuracy: accuracy(&cm).ok(),
            precision: precision(&cm).ok(),
            recall: recall(&cm).ok(),
            f1: f1(&cm).ok(),
            fpr: fpr(&cm).ok(),
            auc: auc_single_point(&cm).ok(),
            abstention_rate: if total_rows == 0 { 0.0 } else { abstained as f64 / total_rows as f64 },
            abstentions_by_reason,
            roc_points: roc_points(&cm).unwrap_or_default(),
            cm,
        }
    }

    /// Builds the confusion matrix from verdicts and scores it.
    pub fn from_verdicts(
        model_id: impl Into<String>,
        dataset_name: impl Into<String>,
        verdicts: &[Verdict],
        labels: &[(RowId, PartState)],
        positive_class: PartState,
        policy: AbstentionPolicy,
    ) -> Result<Self, MetricError> {
        let cm = build_confusion(verdicts, labels, positive_class, policy)?;
        let mut by_reason = BTreeMap::new();
        for v in verdicts.iter().filter(|v| v.is_abstention()) {
            *by_reason.entry(v.reason).or_insert(0) += 1;
        }
        Ok(Self::from_confusion(model_id, dataset_name, cm, verdicts.len() as u64, by_reason))
    }

    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
            Metric::Fpr => self.fpr,
            Metric::Auc => self.auc,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::Prediction;
    use proptest::prelude::*;

    const A: PartState = PartState::Available;
    const O: PartState = PartState::Obsolete;

    fn verdict(i: usize, state: Prediction) -> Verdict {
        let reason = match state {
            Prediction::Available => VerdictReason::MatchedYes,
            Prediction::Obsolete => VerdictReason::MatchedNo,
            Prediction::Abstain => VerdictReason::NoMatch,
        };
        Verdict { row_id: RowId::from(i), state, raw: String::new(), reason }
    }

    fn labels(states: &[PartState]) -> Vec<(RowId, PartState)> {
        states.iter().enumerate().map(|(i, s)| (RowId::from(i), *s)).collect()
    }

    #[test]
    fn perfect_classifier() {
        let truth = [A, A, O, O];
        let verdicts: Vec<_> =
            [Prediction::Available, Prediction::Available, Prediction::Obsolete, Prediction::Obsolete]
                .into_iter()
                .enumerate()
                .map(|(i, p)| verdict(i, p))
                .collect();
        let cm = build_confusion(&verdicts, &labels(&truth), A, AbstentionPolicy::ExcludeAbstain).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.fn_, cm.tn, cm.abstentions), (2, 0, 0, 2, 0));
        assert_eq!(auc_single_point(&cm).unwrap(), 1.0);
        assert_eq!(roc_points(&cm).unwrap(), vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn abstention_policies() {
        let truth: Vec<_> = (0..10).map(|i| if i < 5 { A } else { O }).collect();
        let mut verdicts: Vec<_> = truth
            .iter()
            .enumerate()
            .map(|(i, s)| verdict(i, if *s == A { Prediction::Available } else { Prediction::Obsolete }))
            .collect();
        verdicts[0] = verdict(0, Prediction::Abstain);
        let l = labels(&truth);

        let cm = build_confusion(&verdicts, &l, A, AbstentionPolicy::ExcludeAbstain).unwrap();
        assert_eq!(cm.scored(), 9);
        assert_eq!(cm.abstentions, 1);
        assert_eq!((cm.tp, cm.tn), (4, 5));

        let cm = build_confusion(&verdicts, &l, A, AbstentionPolicy::AbstainAsNegative).unwrap();
        assert_eq!((cm.tp, cm.fn_, cm.abstentions), (4, 1, 0));
        let cm = build_confusion(&verdicts, &l, A, AbstentionPolicy::AbstainAsPositive).unwrap();
        assert_eq!((cm.tp, cm.fn_, cm.abstentions), (5, 0, 0));

        let report =
            MetricsReport::from_verdicts("m", "d", &verdicts, &l, A, AbstentionPolicy::AbstainAsNegative).unwrap();
        assert_eq!(report.abstention_rate, 0.1);
        assert_eq!(report.abstentions_by_reason.get(&VerdictReason::NoMatch), Some(&1));
    }

    #[test]
    fn alignment_errors() {
        let v = vec![verdict(0, Prediction::Available)];
        assert_eq!(
            build_confusion(&v, &labels(&[A, O]), A, AbstentionPolicy::ExcludeAbstain),
            Err(MetricError::LengthMismatch { verdicts: 1, labels: 2 })
        );
        assert_eq!(
            build_confusion(&v, &[(RowId::from(9), A)], A, AbstentionPolicy::ExcludeAbstain),
            Err(MetricError::UnknownRowAlignment(RowId::from(0)))
        );
        let v2 = vec![verdict(0, Prediction::Available), verdict(0, Prediction::Obsolete)];
        assert!(matches!(
            build_confusion(&v2, &labels(&[A, O]), A, AbstentionPolicy::ExcludeAbstain),
            Err(MetricError::DuplicateRow(_))
        ));
    }

    #[test]
    fn labels_matched_by_row_id_not_position() {
        let v = vec![verdict(1, Prediction::Obsolete), verdict(0, Prediction::Available)];
        let cm = build_confusion(&v, &labels(&[A, O]), A, AbstentionPolicy::ExcludeAbstain).unwrap();
        assert_eq!((cm.tp, cm.tn), (1, 1));
    }

    #[test]
    fn t0_arrow_values() {
        let cm = ConfusionMatrix::new(564, 138, 2936, 7442, A);
        assert!((accuracy(&cm).unwrap() - 0.7226).abs() < 5e-5);
        assert!((precision(&cm).unwrap() - 0.8034).abs() < 5e-5);
        assert!((recall(&cm).unwrap() - 0.1611).abs() < 5e-5);
        assert!((f1(&cm).unwrap() - 0.2684).abs() < 5e-5);
    }

    #[test]
    fn gemma_arrow_values() {
        let cm = ConfusionMatrix::new(3346, 214, 154, 7366, A);
        assert!((accuracy(&cm).unwrap() - 0.9668).abs() < 5e-5);
        assert!((precision(&cm).unwrap() - 0.9399).abs() < 5e-5);
        assert!((recall(&cm).unwrap() - 0.9560).abs() < 5e-5);
        assert!((f1(&cm).unwrap() - 0.9479).abs() < 5e-5);
        let roc = roc_points(&cm).unwrap();
        assert!((roc[1].0 - 0.0282).abs() < 5e-5 && (roc[1].1 - 0.956).abs() < 5e-5);
    }

    #[test]
    fn single_point_auc_values() {
        // Llama 3.2 / Arrow and Gemma 2 / GSM Arena operating points.
        let llama = ConfusionMatrix::new(1680, 805, 1820, 6775, A);
        assert!((fpr(&llama).unwrap() - 0.1062).abs() < 5e-5);
        assert!((auc_single_point(&llama).unwrap() - 0.687).abs() < 5e-4);
        let gemma = ConfusionMatrix::new(4754, 3855, 19, 0, O);
        assert_eq!(fpr(&gemma).unwrap(), 1.0);
        assert!((auc_single_point(&gemma).unwrap() - 0.498).abs() < 5e-4);
    }

    #[test]
    fn degenerate_denominators() {
        let cm = ConfusionMatrix::new(0, 0, 5, 5, A);
        assert_eq!(recall(&cm), Ok(0.0));
        assert_eq!(precision(&cm), Err(MetricError::UndefinedMetric(Metric::Precision)));
        assert_eq!(f1(&cm), Err(MetricError::UndefinedMetric(Metric::F1)));
        assert_eq!(fpr(&cm), Ok(0.0));

        let cm = ConfusionMatrix::new(0, 3, 2, 0, A);
        assert_eq!(f1(&cm), Ok(0.0));

        let empty = ConfusionMatrix::new(0, 0, 0, 0, A);
        assert_eq!(accuracy(&empty), Err(MetricError::UndefinedMetric(Metric::Accuracy)));
        assert_eq!(auc_single_point(&empty), Err(MetricError::UndefinedMetric(Metric::Auc)));
        assert!(roc_points(&empty).is_err());

        let report = MetricsReport::from_confusion("m", "d", ConfusionMatrix::new(0, 0, 5, 5, A), 10, BTreeMap::new());
        assert_eq!(report.precision, None);
        assert_eq!(report.recall, Some(0.0));
    }

    #[test]
    fn always_positive_roc() {
        let cm = ConfusionMatrix::new(7, 3, 0, 0, A);
        assert_eq!(roc_points(&cm).unwrap(), vec![(0.0, 0.0), (1.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn display_rounding() {
        assert_eq!(Metric::Accuracy.display(0.9667), "96.67");
        assert_eq!(Metric::Precision.display(0.80342), "0.803");
        assert_eq!(Metric::Auc.display(0.5), "0.500");
    }

    #[test]
    fn confusion_matrix_json_uses_fn() {
        let json = serde_json::to_value(ConfusionMatrix::new(1, 2, 3, 4, O)).unwrap();
        assert_eq!(json["fn"], 3);
        assert_eq!(json["positive_class"], "obsolete");
    }

    fn any_cm() -> impl Strategy<Value = ConfusionMatrix> {
        (0u64..500, 0u64..500, 0u64..500, 0u64..500, any::<bool>())
            .prop_map(|(tp, fp, fn_, tn, pos)| ConfusionMatrix::new(tp, fp, fn_, tn, if pos { A } else { O }))
    }

    proptest! {
        #[test]
        fn accuracy_formula_and_swap_invariance(cm in any_cm()) {
            let swapped = cm.with_swapped_positive();
            prop_assert_eq!((swapped.tp, swapped.fp, swapped.fn_, swapped.tn), (cm.tn, cm.fn_, cm.fp, cm.tp));
            match accuracy(&cm) {
                Ok(a) => {
                    prop_assert_eq!(a, (cm.tp + cm.tn) as f64 / cm.scored() as f64);
                    prop_assert_eq!(accuracy(&swapped).unwrap(), a);
                }
                Err(_) => prop_assert_eq!(cm.scored(), 0),
            }
        }

        #[test]
        fn metrics_in_unit_interval(cm in any_cm()) {
            for value in [accuracy(&cm), precision(&cm), recall(&cm), f1(&cm), fpr(&cm), auc_single_point(&cm)].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&value));
            }
        }

        #[test]
        fn f1_harmonic_mean(cm in any_cm()) {
            if let (Ok(p), Ok(r)) = (precision(&cm), recall(&cm)) {
                let expected = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
                prop_assert!((f1(&cm).unwrap() - expected).abs() <= 1e-12);
            }
        }

        #[test]
        fn auc_identity_and_roc_shape(cm in any_cm()) {
            if let (Ok(tpr), Ok(fpr_)) = (recall(&cm), fpr(&cm)) {
                prop_assert!((auc_single_point(&cm).unwrap() - (tpr + 1.0 - fpr_) / 2.0).abs() <= 1e-12);
                let roc = roc_points(&cm).unwrap();
                prop_assert_eq!(roc.first(), Some(&(0.0, 0.0)));
                prop_assert_eq!(roc.last(), Some(&(1.0, 1.0)));
                prop_assert!(roc.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
            }
        }

        #[test]
        fn build_confusion_is_order_independent(
            rows in proptest::collection::vec((any::<bool>(), 0u8..3), 0..30),
            seed in any::<u64>(),
        ) {
            let truth: Vec<_> = rows.iter().map(|(a, _)| if *a { A } else { O }).collect();
            let preds = [Prediction::Available, Prediction::Obsolete, Prediction::Abstain];
            let verdicts: Vec<_> = rows.iter().enumerate().map(|(i, (_, p))| verdict(i, preds[*p as usize])).collect();
            let l = labels(&truth);
            let cm = build_confusion(&verdicts, &l, A, AbstentionPolicy::ExcludeAbstain).unwrap();
            prop_assert_eq!(cm.rows(), rows.len() as u64);

            let mut pairs: Vec<_> = verdicts.into_iter().zip(l).collect();
            let n = pairs.len();
            let mut state = seed | 1;
            for i in (1..n).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                pairs.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let (v2, l2): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            prop_assert_eq!(build_confusion(&v2, &l2, A, AbstentionPolicy::ExcludeAbstain).unwrap(), cm);
        }
    }
}
