//! Multinomial Naive Bayes, the root-model contract, and pipeline
//! training/prediction.

mod replay;

pub use replay::{replay_predict, ReplayTable};

use crate::corpus::LabeledExample;
use crate::error::{Error, Result};
use crate::features::{
    fit_ipca, fit_ipca_dense, fit_vocab, oversample, vectorize, BalanceConfig, CountVector,
    FeatureConfig, FeatureSpace, Projector,
};
use crate::label::LanguageLabel;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Multinomial Naive Bayes parameters.
#[derive(Debug, Clone)]
pub struct NBModel {
    labels: Vec<LanguageLabel>,
    class_log_prior: Vec<f64>,
    /// |labels| x feature_dimension, row-major.
    feature_log_prob: Vec<f64>,
    alpha: f64,
    feature_dimension: usize,
}

impl NBModel {
    pub(crate) fn from_parts(
        labels: Vec<LanguageLabel>,
        class_log_prior: Vec<f64>,
        feature_log_prob: Vec<f64>,
        alpha: f64,
        feature_dimension: usize,
    ) -> Result<Self> {
        let model = NBModel {
            labels,
            class_log_prior,
            feature_log_prob,
            alpha,
            feature_dimension,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn labels(&self) -> &[LanguageLabel] {
        &self.labels
    }

    pub fn class_log_prior(&self) -> &[f64] {
        &self.class_log_prior
    }

    pub fn feature_log_prob(&self) -> &[f64] {
        &self.feature_log_prob
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn feature_dimension(&self) -> usize {
        self.feature_dimension
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.labels.len();
        if c == 0 {
            return Err(Error::Validation("model has no classes".into()));
        }
        if !self.labels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Validation(
                "model labels must be sorted and unique".into(),
            ));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Validation("alpha must be positive".into()));
        }
        if self.class_log_prior.len() != c
            || self.feature_log_prob.len() != c * self.feature_dimension
        {
            return Err(Error::Validation("model shapes are inconsistent".into()));
        }
        let prior_sum: f64 = self.class_log_prior.iter().map(|p| p.exp()).sum();
        if (prior_sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "class priors sum to {prior_sum}, not 1"
            )));
        }
        for (ci, row) in self.feature_log_prob.chunks(self.feature_dimension).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "class {ci} has non-finite feature log-probabilities"
                )));
            }
            let row_sum: f64 = row.iter().map(|v| v.exp()).sum();
            if (row_sum - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!(
                    "class {ci} feature probabilities sum to {row_sum}, not 1"
                )));
            }
        }
        Ok(())
    }

    /// Unnormalized log scores for a dense input: prior + x . log_prob.
    fn scores_dense(&self, x: &[f64]) -> Vec<f64> {
        let k = self.feature_dimension;
        self.class_log_prior
            .iter()
            .enumerate()
            .map(|(c, prior)| {
                let row = &self.feature_log_prob[c * k..(c + 1) * k];
                prior + row.iter().zip(x).map(|(lp, xv)| lp * xv).sum::<f64>()
            })
            .collect()
    }

    /// Sparse-input scores; zero coordinates contribute nothing.
    fn scores_sparse(&self, x: &CountVector) -> Vec<f64> {
        let k = self.feature_dimension;
        self.class_log_prior
            .iter()
            .enumerate()
            .map(|(c, prior)| {
                let row = &self.feature_log_prob[c * k..(c + 1) * k];
                prior
                    + x.iter()
                        .map(|(i, count)| row[i] * count as f64)
                        .sum::<f64>()
            })
            .collect()
    }

    pub(crate) fn log_posteriors_sparse(&self, x: &CountVector) -> Vec<f64> {
        let mut scores = self.scores_sparse(x);
        log_softmax(&mut scores);
        scores
    }

    pub(crate) fn log_posteriors_dense_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut scores = self.scores_dense(x);
        log_softmax(&mut scores);
        scores
    }
}

fn log_softmax(scores: &mut [f64]) {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + scores
            .iter()
            .map(|s| (s - max).exp())
            .sum::<f64>()
            .ln();
    for s in scores.iter_mut() {
        *s -= lse;
    }
}

/// Fit a multinomial Naive Bayes model with Laplace-style smoothing.
///
/// Labels are the distinct values of `y`, sorted lexicographically.
pub fn nb_fit(x: &[Vec<f64>], y: &[LanguageLabel], alpha: f64) -> Result<NBModel> {
    let declared: BTreeSet<LanguageLabel> = y.iter().cloned().collect();
    nb_fit_declared(x, y, &declared, alpha)
}

/// [`nb_fit`] with an explicit label set; a declared label with no
/// training examples is an error.
pub fn nb_fit_declared(
    x: &[Vec<f64>],
    y: &[LanguageLabel],
    declared: &BTreeSet<LanguageLabel>,
    alpha: f64,
) -> Result<NBModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Validation(format!(
            "need matching non-empty features and labels, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::Validation("alpha must be positive".into()));
    }
    if declared.is_empty() {
        return Err(Error::Validation("declared label set is empty".into()));
    }
    let dim = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Validation(format!(
                "feature row {i} has dimension {}, expected {dim}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(format!(
                "feature row {i} contains a negative or non-finite value"
            )));
        }
    }

    let labels: Vec<LanguageLabel> = declared.iter().cloned().collect();
    let class_index: BTreeMap<&LanguageLabel, usize> =
        labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let c = labels.len();

    let mut class_counts = vec![0usize; c];
    let mut feature_sums = vec![0.0f64; c * dim];
    for (row, label) in x.iter().zip(y) {
        let ci = *class_index.get(label).ok_or_else(|| {
            Error::Validation(format!("label {label} is not in the declared set"))
        })?;
        class_counts[ci] += 1;
        let sums = &mut feature_sums[ci * dim..(ci + 1) * dim];
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(ci) = class_counts.iter().position(|&n| n == 0) {
        return Err(Error::Validation(format!(
            "empty class: {} has no training examples",
            labels[ci]
        )));
    }

    build_nb(labels, class_counts, feature_sums, x.len(), dim, alpha)
}

/// Sparse-input fit used by pipeline training; avoids densifying large
/// vocabularies.
pub(crate) fn nb_fit_sparse(
    x: &[CountVector],
    y: &[LanguageLabel],
    declared: &BTreeSet<LanguageLabel>,
    alpha: f64,
) -> Result<NBModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Validation(format!(
            "need matching non-empty features and labels, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::Validation("alpha must be positive".into()));
    }
    let dim = x[0].dimension();
    let labels: Vec<LanguageLabel> = declared.iter().cloned().collect();
    let class_index: BTreeMap<&LanguageLabel, usize> =
        labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let c = labels.len();

    let mut class_counts = vec![0usize; c];
    let mut feature_sums = vec![0.0f64; c * dim];
    for (cv, label) in x.iter().zip(y) {
        if cv.dimension() != dim {
            return Err(Error::Validation("count vectors disagree on dimension".into()));
        }
        let ci = *class_index.get(label).ok_or_else(|| {
            Error::Validation(format!("label {label} is not in the declared set"))
        })?;
        class_counts[ci] += 1;
        for (i, count) in cv.iter() {
            feature_sums[ci * dim + i] += count as f64;
        }
    }
    if let Some(ci) = class_counts.iter().position(|&n| n == 0) {
        return Err(Error::Validation(format!(
            "empty class: {} has no training examples",
            labels[ci]
        )));
    }
    build_nb(labels, class_counts, feature_sums, x.len(), dim, alpha)
}

fn build_nb(
    labels: Vec<LanguageLabel>,
    class_counts: Vec<usize>,
    feature_sums: Vec<f64>,
    n_examples: usize,
    dim: usize,
    alpha: f64,
) -> Result<NBModel> {
    let class_log_prior: Vec<f64> = class_counts
        .iter()
        .map(|&n| (n as f64 / n_examples as f64).ln())
        .collect();
    let mut feature_log_prob = vec![0.0; labels.len() * dim];
    for ci in 0..labels.len() {
        let sums = &feature_sums[ci * dim..(ci + 1) * dim];
        let total: f64 = sums.iter().sum();
        let denom = total + alpha * dim as f64;
        for (j, s) in sums.iter().enumerate() {
            feature_log_prob[ci * dim + j] = ((s + alpha) / denom).ln();
        }
    }
    NBModel::from_parts(labels, class_log_prior, feature_log_prob, alpha, dim)
}

/// Log-posteriors (log-softmax of prior + likelihood) for a dense
/// nonnegative input.
pub fn nb_predict_log_proba(model: &NBModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.feature_dimension {
        return Err(Error::Validation(format!(
            "input dimension {} does not match model dimension {}",
            x.len(),
            model.feature_dimension
        )));
    }
    if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Validation(
            "input contains a negative or non-finite value".into(),
        ));
    }
    Ok(model.log_posteriors_dense_unchecked(x))
}

/// A root-capable text classifier: anything that maps text to a supported
/// label (or `und`) with an optional posterior.
pub trait RootModel {
    fn supported_labels(&self) -> BTreeSet<LanguageLabel>;
    fn predict(&self, text: &str) -> RootPrediction;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootPrediction {
    pub label: LanguageLabel,
    pub posterior: Option<f64>,
}

/// Vectorizer + optional projector + Naive Bayes, chained.
#[derive(Debug, Clone)]
pub struct Pipeline {
    space: FeatureSpace,
    projector: Option<Projector>,
    model: NBModel,
}

impl Pipeline {
    pub fn new(
        space: FeatureSpace,
        projector: Option<Projector>,
        model: NBModel,
    ) -> Result<Self> {
        match &projector {
            Some(p) => {
                if p.n_features() != space.n_features() {
                    return Err(Error::Validation(format!(
                        "projector input dimension {} != vocabulary size {}",
                        p.n_features(),
                        space.n_features()
                    )));
                }
                if p.k() != model.feature_dimension() {
                    return Err(Error::Validation(format!(
                        "projector output dimension {} != model dimension {}",
                        p.k(),
                        model.feature_dimension()
                    )));
                }
            }
            None => {
                if space.n_features() != model.feature_dimension() {
                    return Err(Error::Validation(format!(
                        "vocabulary size {} != model dimension {}",
                        space.n_features(),
                        model.feature_dimension()
                    )));
                }
            }
        }
        Ok(Pipeline {
            space,
            projector,
            model,
        })
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn projector(&self) -> Option<&Projector> {
        self.projector.as_ref()
    }

    pub fn model(&self) -> &NBModel {
        &self.model
    }

    pub fn labels(&self) -> &[LanguageLabel] {
        self.model.labels()
    }

    /// Log-posteriors over the pipeline's labels for arbitrary text.
    pub fn log_posteriors(&self, text: &str) -> Vec<f64> {
        let cv = vectorize(&self.space, text);
        match &self.projector {
            Some(proj) => {
                let dense = proj.project(&cv).expect("dimensions checked at construction");
                self.model.log_posteriors_dense_unchecked(&dense)
            }
            None => self.model.log_posteriors_sparse(&cv),
        }
    }

    pub fn predict(&self, text: &str) -> (LanguageLabel, f64) {
        pipeline_predict(self, text)
    }
}

impl RootModel for Pipeline {
    fn supported_labels(&self) -> BTreeSet<LanguageLabel> {
        self.model.labels().iter().cloned().collect()
    }

    fn predict(&self, text: &str) -> RootPrediction {
        let (label, posterior) = pipeline_predict(self, text);
        RootPrediction {
            label,
            posterior: Some(posterior),
        }
    }
}

/// Predict a label and posterior for `text`. Total: empty or
/// whitespace-only text maps to (`und`, 0.0); ties break toward the
/// lexicographically smallest label.
pub fn pipeline_predict(p: &Pipeline, text: &str) -> (LanguageLabel, f64) {
    if text.trim().is_empty() {
        return (LanguageLabel::und(), 0.0);
    }
    let logp = p.log_posteriors(text);
    // Labels are sorted, so keeping the first strict maximum breaks ties
    // toward the smallest label.
    let mut best = 0;
    for (i, v) in logp.iter().enumerate().skip(1) {
        if *v > logp[best] {
            best = i;
        }
    }
    (p.labels()[best].clone(), logp[best].exp())
}

/// Either a native pipeline or a replayed black-box identifier, acting as
/// the root of a hierarchy.
#[derive(Debug, Clone)]
pub enum Root {
    Pipeline(Pipeline),
    Replay(ReplayTable),
}

impl Root {
    pub fn supported_labels(&self) -> BTreeSet<LanguageLabel> {
        match self {
            Root::Pipeline(p) => RootModel::supported_labels(p),
            Root::Replay(t) => t.supported_labels(),
        }
    }

    /// Predict from a labeled example; replay roots look the example id up
    /// in the recorded table.
    pub fn predict_example(&self, example: &LabeledExample) -> Result<RootPrediction> {
        match self {
            Root::Pipeline(p) => Ok(RootModel::predict(p, &example.text)),
            Root::Replay(t) => Ok(RootPrediction {
                label: t.predict(&example.id)?,
                posterior: None,
            }),
        }
    }

    /// Predict from raw text; unavailable for replay roots, which are
    /// keyed by example id.
    pub fn predict_text(&self, text: &str) -> Result<RootPrediction> {
        match self {
            Root::Pipeline(p) => Ok(RootModel::predict(p, text)),
            Root::Replay(_) => Err(Error::Config(
                "a replay-backed root predicts by example id, not raw text".into(),
            )),
        }
    }
}

/// Dimensionality-reduction settings for pipeline training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    pub variance_target: f64,
    pub batch_size: usize,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig {
            variance_target: 0.9,
            batch_size: 512,
        }
    }
}

/// Full root-training recipe: featurize, optionally project, optionally
/// balance, then fit Naive Bayes.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub features: FeatureConfig,
    pub reduction: Option<ReductionConfig>,
    pub balance: Option<BalanceConfig>,
    /// Oversample raw count vectors before fitting the projector instead
    /// of oversampling in the projected space.
    pub balance_pre_projection: bool,
    pub alpha: f64,
    /// Permit `und` as a trained class.
    pub allow_unknown_label: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            features: FeatureConfig::root_default(),
            reduction: Some(ReductionConfig::default()),
            balance: None,
            balance_pre_projection: false,
            alpha: 1.0,
            allow_unknown_label: false,
        }
    }
}

/// Train a full pipeline from labeled documents.
pub fn train_pipeline(examples: &[LabeledExample], cfg: &TrainConfig) -> Result<Pipeline> {
    if examples.is_empty() {
        return Err(Error::Validation("no training examples".into()));
    }
    if !cfg.allow_unknown_label {
        if let Some(ex) = examples.iter().find(|e| e.label.is_und()) {
            return Err(Error::Config(format!(
                "example {} is labeled `und`; enable unknown-class training to allow it",
                ex.id
            )));
        }
    }
    let space = fit_vocab(examples.iter().map(|e| e.text.as_str()), &cfg.features)?;
    let vectors: Vec<CountVector> = examples
        .iter()
        .map(|e| vectorize(&space, &e.text))
        .collect();
    let labels: Vec<LanguageLabel> = examples.iter().map(|e| e.label.clone()).collect();
    let declared: BTreeSet<LanguageLabel> = labels.iter().cloned().collect();

    let (projector, model) = match (&cfg.reduction, &cfg.balance) {
        (None, None) => (None, nb_fit_sparse(&vectors, &labels, &declared, cfg.alpha)?),
        (None, Some(balance)) => {
            let dense: Vec<Vec<f64>> = vectors.iter().map(CountVector::to_dense).collect();
            let (x, y) = balanced_rows(&dense, &labels, balance)?;
            (None, nb_fit_declared(&x, &y, &declared, cfg.alpha)?)
        }
        (Some(reduction), balance) => {
            if cfg.balance_pre_projection {
                let balance = balance.as_ref().ok_or_else(|| {
                    Error::Config("balance_pre_projection set without a balance config".into())
                })?;
                let dense: Vec<Vec<f64>> = vectors.iter().map(CountVector::to_dense).collect();
                let (x_raw, y) = balanced_rows(&dense, &labels, balance)?;
                let projector =
                    fit_ipca_dense(&x_raw, reduction.variance_target, reduction.batch_size)?;
                let x: Vec<Vec<f64>> = x_raw
                    .iter()
                    .map(|row| projector.project_dense(row))
                    .collect::<Result<_>>()?;
                let model = nb_fit_declared(&x, &y, &declared, cfg.alpha)?;
                (Some(projector), model)
            } else {
                let projector =
                    fit_ipca(&vectors, reduction.variance_target, reduction.batch_size)?;
                let projected: Vec<Vec<f64>> = vectors
                    .iter()
                    .map(|v| projector.project(v))
                    .collect::<Result<_>>()?;
                let (x, y) = match balance {
                    Some(balance) => balanced_rows(&projected, &labels, balance)?,
                    None => (projected, labels.clone()),
                };
                let model = nb_fit_declared(&x, &y, &declared, cfg.alpha)?;
                (Some(projector), model)
            }
        }
    };
    Pipeline::new(space, projector, model)
}

fn balanced_rows(
    rows: &[Vec<f64>],
    labels: &[LanguageLabel],
    balance: &BalanceConfig,
) -> Result<(Vec<Vec<f64>>, Vec<LanguageLabel>)> {
    let mut by_class: BTreeMap<LanguageLabel, Vec<Vec<f64>>> = BTreeMap::new();
    for (row, label) in rows.iter().zip(labels) {
        by_class.entry(label.clone()).or_default().push(row.clone());
    }
    let balanced = oversample(&by_class, balance)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (label, class_rows) in balanced {
        for row in class_rows {
            x.push(row);
            y.push(label.clone());
        }
    }
    Ok((x, y))
}
