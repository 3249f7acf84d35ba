//! Scalar metrics over (label, score) pair lists.
//!
//! Conventions, also surfaced in every rendered report: a prediction is
//! positive iff `score >= threshold`, ties in AUC count one half (average
//! ranks), and undefined values propagate instead of being coerced to 0.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Which metric a cell or row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    F1,
    #[serde(rename = "AUC")]
    Auc,
}

impl MetricKind {
    pub const ALL: [MetricKind; 2] = [MetricKind::F1, MetricKind::Auc];
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricKind::F1 => write!(f, "F1"),
            MetricKind::Auc => write!(f, "AUC"),
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "F1" => Ok(MetricKind::F1),
            "AUC" => Ok(MetricKind::Auc),
            other => Err(format!("unknown metric `{other}` (expected F1 or AUC)")),
        }
    }
}

/// Confusion counts at a fixed threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// A metric observation: the value when defined, plus the class counts it
/// was computed from. `value: None` renders as `--` downstream and is never
/// imputed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricValue {
    pub value: Option<f64>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl MetricValue {
    pub fn undefined(n_pos: usize, n_neg: usize) -> Self {
        MetricValue {
            value: None,
            n_pos,
            n_neg,
        }
    }
}

/// Tallies predictions at `threshold` (positive iff score >= threshold).
pub fn confusion(pairs: &[(bool, f64)], threshold: f64) -> Confusion {
    debug_assert!(threshold > 0.0 && threshold < 1.0);
    let mut c = Confusion::default();
    for &(label, score) in pairs {
        let predicted = score >= threshold;
        match (label, predicted) {
            (true, true) => c.true_pos += 1,
            (false, true) => c.false_pos += 1,
            (true, false) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    c
}

/// Binary F1 at a fixed threshold: `2tp / (2tp + fp + fn)`. Undefined iff
/// the denominator is zero (no positives and no positive predictions);
/// `tp = 0` with a nonzero denominator yields 0.0.
pub fn f1_binary(pairs: &[(bool, f64)], threshold: f64) -> MetricValue {
    let c = confusion(pairs, threshold);
    let n_pos = (c.true_pos + c.false_neg) as usize;
    let n_neg = (c.false_pos + c.true_neg) as usize;
    let denom = 2 * c.true_pos + c.false_pos + c.false_neg;
    let value = (denom > 0).then(|| 2.0 * c.true_pos as f64 / denom as f64);
    MetricValue {
        value,
        n_pos,
        n_neg,
    }
}

/// ROC AUC in the Mann–Whitney form, computed from average ranks so tied
/// scores contribute one half. Equals the exhaustive pairwise count
/// `(#[pos > neg] + 0.5 * #[pos == neg]) / (n_pos * n_neg)` and is
/// independent of input order. Undefined when either class is empty.
pub fn auc(pairs: &[(bool, f64)]) -> MetricValue {
    let n_pos = pairs.iter().filter(|(l, _)| *l).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return MetricValue::undefined(n_pos, n_neg);
    }
    let mut sorted: Vec<(f64, bool)> = pairs.iter().map(|&(l, s)| (s, l)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Walk tie groups: each group of g values starting at 0-based index i
    // has average 1-based rank (2i + g + 1) / 2.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        let avg_rank = (i + j + 1) as f64 / 2.0;
        let pos_in_group = sorted[i..j].iter().filter(|(_, l)| *l).count();
        rank_sum_pos += avg_rank * pos_in_group as f64;
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    MetricValue {
        value: Some(u / (n_pos as f64 * n_neg as f64)),
        n_pos,
        n_neg,
    }
}

/// Fraction of present labels equal to 1. Undefined when no labels are
/// present.
pub fn prevalence<I: IntoIterator<Item = Option<bool>>>(labels: I) -> MetricValue {
    let mut n_pos = 0usize;
    let mut n_neg = 0usize;
    for label in labels.into_iter().flatten() {
        if label {
            n_pos += 1;
        } else {
            n_neg += 1;
        }
    }
    let present = n_pos + n_neg;
    MetricValue {
        value: (present > 0).then(|| n_pos as f64 / present as f64),
        n_pos,
        n_neg,
    }
}

/// Dispatches on [`MetricKind`]; `threshold` is ignored for AUC.
pub fn metric_value(kind: MetricKind, pairs: &[(bool, f64)], threshold: f64) -> MetricValue {
    match kind {
        MetricKind::F1 => f1_binary(pairs, threshold),
        MetricKind::Auc => auc(pairs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const T: f64 = 0.5;

    #[test]
    fn confusion_hand_enumerated() {
        let pairs = [
            (true, 0.9),
            (true, 0.4),
            (false, 0.6),
            (false, 0.2),
            (true, 0.8),
        ];
        let c = confusion(&pairs, T);
        assert_eq!(
            (c.true_pos, c.false_pos, c.false_neg, c.true_neg),
            (2, 1, 1, 1)
        );
        assert_eq!(c.total(), pairs.len() as u64);
    }

    #[test]
    fn confusion_edge_cases() {
        let perfect = [(true, 1.0), (false, 0.0), (true, 1.0)];
        let c = confusion(&perfect, T);
        assert_eq!((c.false_pos, c.false_neg), (0, 0));
        assert_eq!(confusion(&[], T), Confusion::default());
        // Ties at the threshold predict positive.
        let c = confusion(&[(true, 0.5), (false, 0.5)], T);
        assert_eq!((c.true_pos, c.false_pos), (1, 1));
    }

    #[test]
    fn f1_matches_confusion_oracle() {
        let pairs = [
            (true, 0.9),
            (true, 0.4),
            (false, 0.6),
            (false, 0.2),
            (true, 0.8),
        ];
        let v = f1_binary(&pairs, T);
        assert_abs_diff_eq!(
            v.value.unwrap(),
            2.0 * 2.0 / (2.0 * 2.0 + 1.0 + 1.0),
            epsilon = 1e-15
        );
        assert_eq!((v.n_pos, v.n_neg), (3, 2));
    }

    #[test]
    fn f1_boundaries() {
        let perfect = [(true, 0.9), (false, 0.1)];
        assert_eq!(f1_binary(&perfect, T).value, Some(1.0));
        // No positives, nothing predicted positive: vacuous denominator.
        let vacuous = [(false, 0.1), (false, 0.2)];
        assert_eq!(f1_binary(&vacuous, T).value, None);
        // tp = 0 but fp + fn > 0 is a defined 0.0.
        let zero = [(true, 0.1), (false, 0.9)];
        assert_eq!(f1_binary(&zero, T).value, Some(0.0));
    }

    #[test]
    fn auc_hand_enumerated() {
        let pairs = [(true, 0.9), (false, 0.8), (true, 0.7), (false, 0.1)];
        let v = auc(&pairs);
        assert_abs_diff_eq!(v.value.unwrap(), 0.75, epsilon = 1e-15);
        assert_eq!((v.n_pos, v.n_neg), (2, 2));
    }

    #[test]
    fn auc_ties_and_degenerate_classes() {
        let tie = [(true, 0.5), (false, 0.5)];
        assert_abs_diff_eq!(auc(&tie).value.unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(auc(&[(true, 0.3), (true, 0.9)]).value, None);
        assert_eq!(auc(&[]).value, None);
    }

    #[test]
    fn auc_matches_external_reference() {
        // Frozen against scikit-learn roc_auc_score / f1_score on the same
        // vectors (tied scores included).
        let labels = [
            true, false, true, true, false, false, true, false, true, false, false, true,
        ];
        let scores = [
            0.61, 0.35, 0.61, 0.92, 0.07, 0.61, 0.50, 0.35, 0.88, 0.22, 0.50, 0.45,
        ];
        let pairs: Vec<(bool, f64)> = labels.iter().copied().zip(scores).collect();
        assert_abs_diff_eq!(auc(&pairs).value.unwrap(), 0.875, epsilon = 1e-12);
        assert_abs_diff_eq!(
            f1_binary(&pairs, T).value.unwrap(),
            0.7692307692307693,
            epsilon = 1e-12
        );
        let c = confusion(&pairs, T);
        assert_eq!(
            (c.true_pos, c.false_pos, c.false_neg, c.true_neg),
            (5, 2, 1, 4)
        );
    }

    #[test]
    fn prevalence_counts_present_labels_only() {
        let v = prevalence([Some(true), Some(false), Some(true), None]);
        assert_abs_diff_eq!(v.value.unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!((v.n_pos, v.n_neg), (2, 1));
        assert_eq!(prevalence([Some(false), Some(false)]).value, Some(0.0));
        assert_eq!(prevalence([None, None]).value, None);
    }

    #[test]
    fn metric_kind_round_trips() {
        assert_eq!("f1".parse::<MetricKind>().unwrap(), MetricKind::F1);
        assert_eq!("AUC".parse::<MetricKind>().unwrap(), MetricKind::Auc);
        assert_eq!(MetricKind::Auc.to_string(), "AUC");
        assert!("prauc".parse::<MetricKind>().is_err());
    }
}
