//! Confusion matrices, row-normalized hit ratios, and extraction of
//! highly-confused language clusters.

use crate::classifier::Root;
use crate::corpus::LabeledExample;
use crate::error::{Error, Result};
use crate::label::LanguageLabel;
use std::collections::{BTreeMap, BTreeSet};

/// (true x predicted) counts over the union of observed labels. Rows exist
/// for languages the root does not support; their predictions land in
/// supported columns (or `und`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionReport {
    labels: Vec<LanguageLabel>,
    /// Row-major |labels| x |labels|, row = true label.
    counts: Vec<u64>,
    row_totals: Vec<u64>,
}

impl ConfusionReport {
    pub fn labels(&self) -> &[LanguageLabel] {
        &self.labels
    }

    pub fn index_of(&self, label: &LanguageLabel) -> Option<usize> {
        self.labels.binary_search(label).ok()
    }

    pub fn count(&self, true_label: &LanguageLabel, predicted: &LanguageLabel) -> u64 {
        match (self.index_of(true_label), self.index_of(predicted)) {
            (Some(t), Some(p)) => self.counts[t * self.labels.len() + p],
            _ => 0,
        }
    }

    pub fn row_total(&self, true_label: &LanguageLabel) -> u64 {
        self.index_of(true_label).map_or(0, |t| self.row_totals[t])
    }

    /// Render as TSV: a header of predicted labels, then one row per true
    /// label. Round-trips exactly through [`ConfusionReport::from_tsv`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("true\\pred");
        for label in &self.labels {
            out.push('\t');
            out.push_str(label.as_str());
        }
        out.push('\n');
        for (t, label) in self.labels.iter().enumerate() {
            out.push_str(label.as_str());
            for p in 0..self.labels.len() {
                out.push('\t');
                out.push_str(&self.counts[t * self.labels.len() + p].to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse("<tsv>", 1, "empty confusion TSV"))?;
        let columns: Vec<LanguageLabel> = header
            .split('\t')
            .skip(1)
            .map(LanguageLabel::new)
            .collect::<Result<_>>()?;
        if columns.is_empty() {
            return Err(Error::parse("<tsv>", 1, "confusion TSV has no labels"));
        }
        let n = columns.len();
        let mut rows: BTreeMap<LanguageLabel, Vec<u64>> = BTreeMap::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let label = LanguageLabel::new(fields.next().unwrap_or_default())
                .map_err(|e| Error::parse("<tsv>", i + 1, e.to_string()))?;
            let counts: Vec<u64> = fields
                .map(|f| {
                    f.parse::<u64>()
                        .map_err(|e| Error::parse("<tsv>", i + 1, e.to_string()))
                })
                .collect::<Result<_>>()?;
            if counts.len() != n {
                return Err(Error::parse(
                    "<tsv>",
                    i + 1,
                    format!("expected {n} counts, got {}", counts.len()),
                ));
            }
            rows.insert(label, counts);
        }
        if rows.len() != n || !rows.keys().eq(columns.iter()) {
            return Err(Error::parse(
                "<tsv>",
                1,
                "row labels do not match the header labels",
            ));
        }
        let mut counts = Vec::with_capacity(n * n);
        for label in &columns {
            counts.extend_from_slice(&rows[label]);
        }
        let row_totals = counts.chunks(n).map(|row| row.iter().sum()).collect();
        Ok(ConfusionReport {
            labels: columns,
            counts,
            row_totals,
        })
    }
}

/// Tally a confusion matrix from (true, predicted) label pairs.
pub fn confusion_from_pairs(pairs: &[(LanguageLabel, LanguageLabel)]) -> Result<ConfusionReport> {
    if pairs.is_empty() {
        return Err(Error::Validation(
            "cannot build a confusion matrix from zero examples".into(),
        ));
    }
    let labels: Vec<LanguageLabel> = pairs
        .iter()
        .flat_map(|(t, p)| [t.clone(), p.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&LanguageLabel, usize> =
        labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let n = labels.len();
    let mut counts = vec![0u64; n * n];
    let mut row_totals = vec![0u64; n];
    for (t, p) in pairs {
        let ti = index[t];
        counts[ti * n + index[p]] += 1;
        row_totals[ti] += 1;
    }
    Ok(ConfusionReport {
        labels,
        counts,
        row_totals,
    })
}

/// Run the root over labeled examples and tally its confusion matrix.
/// `und` predictions land in a dedicated column.
pub fn compute_confusion(root: &Root, test: &[LabeledExample]) -> Result<ConfusionReport> {
    if test.is_empty() {
        return Err(Error::Validation(
            "cannot compute confusion on an empty test set".into(),
        ));
    }
    let pairs: Vec<(LanguageLabel, LanguageLabel)> = test
        .iter()
        .map(|ex| Ok((ex.label.clone(), root.predict_example(ex)?.label)))
        .collect::<Result<_>>()?;
    confusion_from_pairs(&pairs)
}

/// Row-normalized confusion: `ratios[t][p]` is the fraction of true-`t`
/// examples predicted `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct HitRatioMatrix {
    labels: Vec<LanguageLabel>,
    /// Row-major; rows of dropped (zero-example) labels are all zero.
    ratios: Vec<f64>,
    /// True labels with zero examples, excluded from normalization.
    dropped: Vec<LanguageLabel>,
}

impl HitRatioMatrix {
    pub fn labels(&self) -> &[LanguageLabel] {
        &self.labels
    }

    pub fn dropped(&self) -> &[LanguageLabel] {
        &self.dropped
    }

    pub fn ratio(&self, true_label: &LanguageLabel, predicted: &LanguageLabel) -> f64 {
        match (
            self.labels.binary_search(true_label).ok(),
            self.labels.binary_search(predicted).ok(),
        ) {
            (Some(t), Some(p)) => self.ratios[t * self.labels.len() + p],
            _ => 0.0,
        }
    }
}

/// Normalize each confusion row by its example count. Rows with zero
/// examples are dropped (kept as all-zero, reported in `dropped`).
pub fn hit_ratios(report: &ConfusionReport) -> HitRatioMatrix {
    let n = report.labels.len();
    let mut ratios = vec![0.0; n * n];
    let mut dropped = Vec::new();
    for t in 0..n {
        let total = report.row_totals[t];
        if total == 0 {
            dropped.push(report.labels[t].clone());
            continue;
        }
        for p in 0..n {
            ratios[t * n + p] = report.counts[t * n + p] as f64 / total as f64;
        }
    }
    HitRatioMatrix {
        labels: report.labels.clone(),
        ratios,
        dropped,
    }
}

/// A connected set of mutually confused languages. `triggers` are the
/// members the root can actually predict, i.e. the entry points routing
/// can fire on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub id: String,
    pub members: BTreeSet<LanguageLabel>,
    pub triggers: BTreeSet<LanguageLabel>,
}

impl Cluster {
    pub fn new(
        members: BTreeSet<LanguageLabel>,
        root_supported: &BTreeSet<LanguageLabel>,
    ) -> Self {
        let id = members
            .iter()
            .map(LanguageLabel::as_str)
            .collect::<Vec<_>>()
            .join("-");
        let triggers = members.intersection(root_supported).cloned().collect();
        Cluster {
            id,
            members,
            triggers,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ClusterFinding {
    pub clusters: Vec<Cluster>,
    /// Connected components none of whose members the root supports;
    /// routing can never reach them.
    pub unroutable: Vec<Cluster>,
}

/// Extract confused clusters: connect `t -> p` whenever the off-diagonal
/// hit ratio strictly exceeds the threshold, take connected components of
/// the undirected closure with at least two members, and split them into
/// routable clusters and unroutable ones. `und` never forms edges.
pub fn find_clusters(
    ratios: &HitRatioMatrix,
    threshold: f64,
    root_supported: &BTreeSet<LanguageLabel>,
) -> Result<ClusterFinding> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Validation(format!(
            "cluster threshold {threshold} must lie in (0, 1]"
        )));
    }
    let n = ratios.labels.len();
    let mut adjacency = vec![Vec::new(); n];
    for t in 0..n {
        if ratios.labels[t].is_und() {
            continue;
        }
        for p in 0..n {
            if t == p || ratios.labels[p].is_und() {
                continue;
            }
            if ratios.ratios[t * n + p] > threshold {
                adjacency[t].push(p);
                adjacency[p].push(t);
            }
        }
    }

    let mut visited = vec![false; n];
    let mut finding = ClusterFinding::default();
    for start in 0..n {
        if visited[start] || adjacency[start].is_empty() {
            continue;
        }
        let mut stack = vec![start];
        let mut members = BTreeSet::new();
        visited[start] = true;
        while let Some(node) = stack.pop() {
            members.insert(ratios.labels[node].clone());
            for &next in &adjacency[node] {
                if !visited[next] {
                    visited[next] = true;
                    stack.push(next);
                }
            }
        }
        debug_assert!(members.len() >= 2);
        let cluster = Cluster::new(members, root_supported);
        if cluster.triggers.is_empty() {
            finding.unroutable.push(cluster);
        } else {
            finding.clusters.push(cluster);
        }
    }
    finding.clusters.sort_by(|a, b| a.id.cmp(&b.id));
    finding.unroutable.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(finding)
}
