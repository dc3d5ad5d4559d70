//! Per-language precision/recall/F1, macro-F1 aggregation, and
//! cluster-subset aggregates.

use crate::confusion::Cluster;
use crate::error::{Error, Result};
use crate::label::LanguageLabel;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Which labels enter the macro-F1 denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacroDenominator {
    /// Labels with at least one test example (the default).
    PositiveSupport,
    /// Every declared label, zero-support ones contributing F1 = 0. Used
    /// for cross-tool comparison over a fixed label inventory.
    DeclaredLabels,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub per_label: BTreeMap<LanguageLabel, LabelMetrics>,
    pub macro_f1: f64,
    pub subset_aggregates: BTreeMap<String, f64>,
    /// Predictions outside the label set (excluding `und`).
    pub out_of_set_predictions: usize,
    /// `und` predictions, counted as wrong for every true label.
    pub und_predictions: usize,
}

impl EvalReport {
    /// TSV dump: label, precision, recall, f1, support. Floats use fixed
    /// 6-decimal formatting.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("label\tprecision\trecall\tf1\tsupport\n");
        for (label, m) in &self.per_label {
            out.push_str(&format!(
                "{label}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
                m.precision, m.recall, m.f1, m.support
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Standard one-vs-rest metrics over (true, predicted) pairs.
///
/// Predictions outside `label_set ∪ {und}` count as a false negative for
/// their true label and a false positive for nothing; `und` predictions
/// are wrong for every true label and never enter the macro denominator.
pub fn evaluate(
    predictions: &[(LanguageLabel, LanguageLabel)],
    label_set: &BTreeSet<LanguageLabel>,
    denominator: MacroDenominator,
) -> Result<EvalReport> {
    if predictions.is_empty() {
        return Err(Error::Validation("cannot evaluate zero predictions".into()));
    }
    let labels: Vec<&LanguageLabel> = label_set.iter().filter(|l| !l.is_und()).collect();
    if labels.is_empty() {
        return Err(Error::Validation("label set is empty".into()));
    }
    let index: BTreeMap<&LanguageLabel, usize> =
        labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();

    let mut tp = vec![0usize; labels.len()];
    let mut fp = vec![0usize; labels.len()];
    let mut fn_ = vec![0usize; labels.len()];
    let mut support = vec![0usize; labels.len()];
    let mut out_of_set = 0usize;
    let mut und_predictions = 0usize;

    for (true_label, predicted) in predictions {
        let ti = index.get(true_label).copied();
        if let Some(ti) = ti {
            support[ti] += 1;
        }
        if predicted.is_und() {
            und_predictions += 1;
            if let Some(ti) = ti {
                fn_[ti] += 1;
            }
            continue;
        }
        match index.get(predicted).copied() {
            Some(pi) => {
                if Some(pi) == ti {
                    tp[pi] += 1;
                } else {
                    fp[pi] += 1;
                    if let Some(ti) = ti {
                        fn_[ti] += 1;
                    }
                }
            }
            None => {
                out_of_set += 1;
                if let Some(ti) = ti {
                    fn_[ti] += 1;
                }
            }
        }
    }

    let mut per_label = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        let precision = ratio(tp[i], tp[i] + fp[i]);
        let recall = ratio(tp[i], tp[i] + fn_[i]);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_label.insert(
            (*label).clone(),
            LabelMetrics {
                precision,
                recall,
                f1,
                support: support[i],
            },
        );
    }

    let denominator_labels: Vec<&LanguageLabel> = match denominator {
        MacroDenominator::PositiveSupport => labels
            .iter()
            .enumerate()
            .filter(|&(i, _)| support[i] > 0)
            .map(|(_, l)| *l)
            .collect(),
        MacroDenominator::DeclaredLabels => labels.clone(),
    };
    let macro_f1 = if denominator_labels.is_empty() {
        0.0
    } else {
        denominator_labels
            .iter()
            .map(|l| per_label[*l].f1)
            .sum::<f64>()
            / denominator_labels.len() as f64
    };

    Ok(EvalReport {
        per_label,
        macro_f1,
        subset_aggregates: BTreeMap::new(),
        out_of_set_predictions: out_of_set,
        und_predictions,
    })
}

fn ratio(num: usize, denom: usize) -> f64 {
    if denom == 0 {
        0.0
    } else {
        num as f64 / denom as f64
    }
}

#[derive(Debug, Clone)]
pub struct ClusterAggregates {
    /// Cluster id -> unweighted mean member F1, plus an "aggregate" entry
    /// over the union of all cluster members.
    pub per_cluster: BTreeMap<String, f64>,
    /// (cluster id, member) pairs missing from the report, scored 0.
    pub missing: Vec<(String, LanguageLabel)>,
}

impl ClusterAggregates {
    pub fn aggregate(&self) -> f64 {
        self.per_cluster.get("aggregate").copied().unwrap_or(0.0)
    }
}

/// Unweighted mean of per-label F1 over each cluster's members. A member
/// absent from the report contributes F1 = 0 (the unsupported-by-model
/// case) and is listed in `missing`.
pub fn cluster_aggregate(report: &EvalReport, clusters: &[Cluster]) -> ClusterAggregates {
    let mut per_cluster = BTreeMap::new();
    let mut missing = Vec::new();
    let mut union: BTreeSet<&LanguageLabel> = BTreeSet::new();
    for cluster in clusters {
        let mut sum = 0.0;
        for member in &cluster.members {
            union.insert(member);
            match report.per_label.get(member) {
                Some(m) => sum += m.f1,
                None => missing.push((cluster.id.clone(), member.clone())),
            }
        }
        per_cluster.insert(cluster.id.clone(), sum / cluster.members.len() as f64);
    }
    if !union.is_empty() {
        let sum: f64 = union
            .iter()
            .map(|m| report.per_label.get(*m).map_or(0.0, |m| m.f1))
            .sum();
        per_cluster.insert("aggregate".to_string(), sum / union.len() as f64);
    }
    ClusterAggregates {
        per_cluster,
        missing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(s: &str) -> LanguageLabel {
        LanguageLabel::new(s).unwrap()
    }

    fn set(labels: &[&str]) -> BTreeSet<LanguageLabel> {
        labels.iter().map(|l| label(l)).collect()
    }

    fn preds(spec: &[(&str, &str)]) -> Vec<(LanguageLabel, LanguageLabel)> {
        spec.iter().map(|&(t, p)| (label(t), label(p))).collect()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let p = preds(&[("aaa", "aaa"), ("bbb", "bbb"), ("ccc", "ccc")]);
        let report = evaluate(&p, &set(&["aaa", "bbb", "ccc"]), MacroDenominator::PositiveSupport)
            .unwrap();
        assert_eq!(report.macro_f1, 1.0);
        for m in report.per_label.values() {
            assert_eq!(m.f1, 1.0);
        }
    }

    #[test]
    fn hand_computed_degenerate_predictor() {
        // true [A,A,B,B], predicted all A:
        //   F1(A) = 2*(0.5*1)/(0.5+1) = 2/3, F1(B) = 0, macro = 1/3.
        let p = preds(&[("aaa", "aaa"), ("aaa", "aaa"), ("bbb", "aaa"), ("bbb", "aaa")]);
        let report =
            evaluate(&p, &set(&["aaa", "bbb"]), MacroDenominator::PositiveSupport).unwrap();
        let a = &report.per_label[&label("aaa")];
        assert!((a.precision - 0.5).abs() < 1e-12);
        assert!((a.recall - 1.0).abs() < 1e-12);
        assert!((a.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.per_label[&label("bbb")].f1, 0.0);
        assert!((report.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn macro_denominator_modes_differ_on_zero_support() {
        let p = preds(&[("aaa", "aaa"), ("bbb", "bbb")]);
        let labels = set(&["aaa", "bbb", "zzz"]);
        let default =
            evaluate(&p, &labels, MacroDenominator::PositiveSupport).unwrap();
        assert_eq!(default.macro_f1, 1.0);
        let declared = evaluate(&p, &labels, MacroDenominator::DeclaredLabels).unwrap();
        assert!((declared.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
        // Zero-support labels still appear in the table.
        assert_eq!(declared.per_label[&label("zzz")].support, 0);
    }

    #[test]
    fn out_of_set_predictions_are_false_negatives_only() {
        let p = preds(&[("aaa", "qqq"), ("aaa", "aaa")]);
        let report =
            evaluate(&p, &set(&["aaa"]), MacroDenominator::PositiveSupport).unwrap();
        assert_eq!(report.out_of_set_predictions, 1);
        let a = &report.per_label[&label("aaa")];
        assert!((a.recall - 0.5).abs() < 1e-12);
        assert!((a.precision - 1.0).abs() < 1e-12);
    }

    #[test]
    fn und_predictions_count_as_misses_and_leave_the_denominator() {
        let mut p = preds(&[("aaa", "aaa")]);
        p.push((label("aaa"), LanguageLabel::und()));
        let mut labels = set(&["aaa"]);
        labels.insert(LanguageLabel::und());
        let report = evaluate(&p, &labels, MacroDenominator::DeclaredLabels).unwrap();
        assert_eq!(report.und_predictions, 1);
        assert!(!report.per_label.contains_key(&LanguageLabel::und()));
        let a = &report.per_label[&label("aaa")];
        assert!((a.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariance_and_macro_bounds() {
        let p = preds(&[
            ("aaa", "aaa"),
            ("aaa", "bbb"),
            ("bbb", "bbb"),
            ("bbb", "bbb"),
            ("ccc", "aaa"),
            ("ccc", "ccc"),
        ]);
        let labels = set(&["aaa", "bbb", "ccc"]);
        let report = evaluate(&p, &labels, MacroDenominator::PositiveSupport).unwrap();
        let mut reversed = p.clone();
        reversed.reverse();
        let report_rev = evaluate(&reversed, &labels, MacroDenominator::PositiveSupport).unwrap();
        assert_eq!(report.macro_f1, report_rev.macro_f1);
        for (l, m) in &report.per_label {
            assert_eq!(m, &report_rev.per_label[l]);
        }
        let f1s: Vec<f64> = report.per_label.values().map(|m| m.f1).collect();
        let min = f1s.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = f1s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(report.macro_f1 >= min - 1e-12 && report.macro_f1 <= max + 1e-12);
    }

    #[test]
    fn adding_a_correct_example_never_decreases_f1() {
        let base = preds(&[("aaa", "aaa"), ("aaa", "bbb"), ("bbb", "bbb")]);
        let labels = set(&["aaa", "bbb"]);
        let before = evaluate(&base, &labels, MacroDenominator::PositiveSupport).unwrap();
        let mut extended = base.clone();
        extended.push((label("aaa"), label("aaa")));
        let after = evaluate(&extended, &labels, MacroDenominator::PositiveSupport).unwrap();
        assert!(after.per_label[&label("aaa")].f1 >= before.per_label[&label("aaa")].f1);
    }

    fn report_with_f1(entries: &[(&str, f64)]) -> EvalReport {
        let per_label = entries
            .iter()
            .map(|&(l, f1)| {
                (
                    label(l),
                    LabelMetrics {
                        precision: f1,
                        recall: f1,
                        f1,
                        support: 10,
                    },
                )
            })
            .collect();
        EvalReport {
            per_label,
            macro_f1: 0.0,
            subset_aggregates: BTreeMap::new(),
            out_of_set_predictions: 0,
            und_predictions: 0,
        }
    }

    #[test]
    fn cluster_aggregate_means_member_f1() {
        // Bats 0.91, Georgian 0.89 -> 0.90.
        let report = report_with_f1(&[("bbl", 0.91), ("kat", 0.89)]);
        let supported = set(&["kat"]);
        let cluster = Cluster::new(set(&["bbl", "kat"]), &supported);
        let agg = cluster_aggregate(&report, &[cluster]);
        assert!((agg.per_cluster["bbl-kat"] - 0.90).abs() < 1e-12);
        assert!((agg.aggregate() - 0.90).abs() < 1e-12);
        assert!(agg.missing.is_empty());
    }

    #[test]
    fn absent_members_contribute_zero() {
        let report = report_with_f1(&[("kat", 0.9)]);
        let supported = set(&["kat"]);
        let cluster = Cluster::new(set(&["bbl", "kat"]), &supported);
        let agg = cluster_aggregate(&report, &[cluster]);
        assert!((agg.per_cluster["bbl-kat"] - 0.45).abs() < 1e-12);
        assert_eq!(agg.missing, vec![("bbl-kat".to_string(), label("bbl"))]);
    }

    #[test]
    fn global_aggregate_spans_the_member_union() {
        let report = report_with_f1(&[("aaa", 1.0), ("bbb", 0.5), ("ccc", 0.25), ("ddd", 0.25)]);
        let supported = set(&["aaa", "ccc"]);
        let c1 = Cluster::new(set(&["aaa", "bbb"]), &supported);
        let c2 = Cluster::new(set(&["ccc", "ddd"]), &supported);
        let agg = cluster_aggregate(&report, &[c1, c2]);
        assert!((agg.per_cluster["aaa-bbb"] - 0.75).abs() < 1e-12);
        assert!((agg.per_cluster["ccc-ddd"] - 0.25).abs() < 1e-12);
        assert!((agg.aggregate() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tsv_has_six_decimal_floats() {
        let p = preds(&[("aaa", "aaa"), ("bbb", "aaa")]);
        let report =
            evaluate(&p, &set(&["aaa", "bbb"]), MacroDenominator::PositiveSupport).unwrap();
        let tsv = report.to_tsv();
        assert!(tsv.starts_with("label\tprecision\trecall\tf1\tsupport\n"));
        assert!(tsv.contains("aaa\t0.500000\t1.000000\t0.666667\t1"));
    }
}
