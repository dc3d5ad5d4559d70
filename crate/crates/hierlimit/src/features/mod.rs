//! Text featurization: character/word n-gram count vectors, incremental PCA
//! projection, and synthetic minority oversampling.

mod ipca;
mod smote;

pub use ipca::{fit_ipca, fit_ipca_dense, Projector};
pub use smote::{oversample, smote, BalanceConfig, TargetCount};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use unicode_normalization::UnicodeNormalization;

/// N-gram extraction settings. At least one range must be enabled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    /// Inclusive character n-gram range, extracted over the NFC text
    /// including spaces.
    pub char_ngram_range: Option<(usize, usize)>,
    /// Inclusive word n-gram range over whitespace-tokenized text.
    pub word_ngram_range: Option<(usize, usize)>,
    /// Keep n-grams occurring in at least this many documents.
    pub min_doc_frequency: usize,
    /// Cap on vocabulary size; `None` is unlimited.
    pub max_features: Option<usize>,
    pub lowercase: bool,
}

impl FeatureConfig {
    /// Root-model default: coarse high-coverage character features.
    pub fn root_default() -> Self {
        FeatureConfig {
            char_ngram_range: Some((1, 5)),
            word_ngram_range: None,
            min_doc_frequency: 1,
            max_features: Some(200_000),
            lowercase: true,
        }
    }

    pub fn chars(lo: usize, hi: usize) -> Self {
        FeatureConfig {
            char_ngram_range: Some((lo, hi)),
            word_ngram_range: None,
            min_doc_frequency: 1,
            max_features: None,
            lowercase: true,
        }
    }

    pub fn words(lo: usize, hi: usize) -> Self {
        FeatureConfig {
            char_ngram_range: None,
            word_ngram_range: Some((lo, hi)),
            min_doc_frequency: 1,
            max_features: None,
            lowercase: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.char_ngram_range.is_none() && self.word_ngram_range.is_none() {
            return Err(Error::Config(
                "feature config enables neither character nor word n-grams".into(),
            ));
        }
        for (name, range) in [
            ("char_ngram_range", self.char_ngram_range),
            ("word_ngram_range", self.word_ngram_range),
        ] {
            if let Some((lo, hi)) = range {
                if lo < 1 || lo > hi || hi > 8 {
                    return Err(Error::Config(format!(
                        "{name} ({lo},{hi}) must satisfy 1 <= lo <= hi <= 8"
                    )));
                }
            }
        }
        if self.min_doc_frequency < 1 {
            return Err(Error::Config("min_doc_frequency must be >= 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::Config("max_features must be positive".into()));
        }
        Ok(())
    }

    fn normalize(&self, text: &str) -> String {
        let nfc: String = text.nfc().collect();
        if self.lowercase {
            nfc.to_lowercase()
        } else {
            nfc
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Char,
    Word,
}

/// A vocabulary entry. Character and word n-grams live in separate
/// namespaces so a 3-character gram like `"x y"` never shares a column
/// with the word bigram `"x y"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Term {
    pub kind: TermKind,
    pub text: String,
}

impl Term {
    fn ch(text: String) -> Self {
        Term {
            kind: TermKind::Char,
            text,
        }
    }

    fn word(text: String) -> Self {
        Term {
            kind: TermKind::Word,
            text,
        }
    }
}

/// Fitted n-gram vocabulary: term -> column index, with a deterministic
/// ordering (descending corpus frequency, ties by term text).
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    config: FeatureConfig,
    vocabulary: Vec<Term>,
    index: HashMap<Term, usize>,
}

impl FeatureSpace {
    pub(crate) fn from_parts(config: FeatureConfig, vocabulary: Vec<Term>) -> Result<Self> {
        config.validate()?;
        if vocabulary.is_empty() {
            return Err(Error::Config("vocabulary empty".into()));
        }
        let index: HashMap<Term, usize> = vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if index.len() != vocabulary.len() {
            return Err(Error::Validation("vocabulary has duplicate terms".into()));
        }
        Ok(FeatureSpace {
            config,
            vocabulary,
            index,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn vocabulary(&self) -> &[Term] {
        &self.vocabulary
    }

    pub fn index_of(&self, term: &Term) -> Option<usize> {
        self.index.get(term).copied()
    }
}

/// Sparse nonnegative integer count vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector {
    indices: Vec<usize>,
    values: Vec<u64>,
    dimension: usize,
}

impl CountVector {
    pub fn new(indices: Vec<usize>, values: Vec<u64>, dimension: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Validation(
                "count vector indices and values differ in length".into(),
            ));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Validation(
                "count vector indices must be strictly increasing".into(),
            ));
        }
        if indices.last().is_some_and(|&i| i >= dimension) {
            return Err(Error::Validation(
                "count vector index exceeds dimension".into(),
            ));
        }
        if values.iter().any(|&v| v == 0) {
            return Err(Error::Validation("count vector values must be >= 1".into()));
        }
        Ok(CountVector {
            indices,
            values,
            dimension,
        })
    }

    pub fn empty(dimension: usize) -> Self {
        CountVector {
            indices: Vec::new(),
            values: Vec::new(),
            dimension,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.dimension];
        for (i, v) in self.iter() {
            dense[i] = v as f64;
        }
        dense
    }

    /// Multiply every count by a positive integer.
    pub fn scaled(&self, factor: u64) -> Self {
        assert!(factor >= 1);
        CountVector {
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
            dimension: self.dimension,
        }
    }
}

fn for_each_term(text: &str, config: &FeatureConfig, mut f: impl FnMut(Term)) {
    if let Some((lo, hi)) = config.char_ngram_range {
        let chars: Vec<char> = text.chars().collect();
        for n in lo..=hi {
            if chars.len() < n {
                break;
            }
            for window in chars.windows(n) {
                f(Term::ch(window.iter().collect()));
            }
        }
    }
    if let Some((lo, hi)) = config.word_ngram_range {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        for n in lo..=hi {
            if tokens.len() < n {
                break;
            }
            for window in tokens.windows(n) {
                f(Term::word(window.join(" ")));
            }
        }
    }
}

/// Count every enabled n-gram of `text` (already normalized).
fn count_terms(text: &str, config: &FeatureConfig) -> HashMap<Term, u64> {
    let mut counts = HashMap::new();
    for_each_term(text, config, |term| {
        *counts.entry(term).or_insert(0) += 1;
    });
    counts
}

/// Build an n-gram vocabulary from a document collection.
///
/// Keeps terms occurring in at least `min_doc_frequency` documents,
/// ordered by descending total count (ties by term text, then character
/// terms before word terms), truncated to `max_features`.
pub fn fit_vocab<I, S>(texts: I, config: &FeatureConfig) -> Result<FeatureSpace>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    config.validate()?;
    let mut total: HashMap<Term, u64> = HashMap::new();
    let mut doc_freq: HashMap<Term, usize> = HashMap::new();
    let mut n_docs = 0usize;
    for text in texts {
        n_docs += 1;
        let normalized = config.normalize(text.as_ref());
        for (term, count) in count_terms(&normalized, config) {
            *total.entry(term.clone()).or_insert(0) += count;
            *doc_freq.entry(term).or_insert(0) += 1;
        }
    }
    if n_docs == 0 {
        return Err(Error::Validation("fit_vocab requires at least one text".into()));
    }

    let mut surviving: Vec<(Term, u64)> = total
        .into_iter()
        .filter(|(term, _)| doc_freq[term] >= config.min_doc_frequency)
        .collect();
    surviving.sort_by(|(ta, ca), (tb, cb)| {
        cb.cmp(ca)
            .then_with(|| ta.text.cmp(&tb.text))
            .then_with(|| ta.kind.cmp(&tb.kind))
    });
    if let Some(cap) = config.max_features {
        surviving.truncate(cap);
    }
    if surviving.is_empty() {
        return Err(Error::Config("vocabulary empty".into()));
    }
    let vocabulary = surviving.into_iter().map(|(t, _)| t).collect();
    FeatureSpace::from_parts(config.clone(), vocabulary)
}

/// Count in-vocabulary n-grams of `text`. Unknown n-grams are dropped;
/// empty text yields an all-zero vector.
pub fn vectorize(space: &FeatureSpace, text: &str) -> CountVector {
    let normalized = space.config.normalize(text);
    let mut hits: Vec<(usize, u64)> = Vec::new();
    for (term, count) in count_terms(&normalized, &space.config) {
        if let Some(col) = space.index_of(&term) {
            hits.push((col, count));
        }
    }
    hits.sort_unstable_by_key(|&(col, _)| col);
    let (indices, values) = hits.into_iter().unzip();
    CountVector {
        indices,
        values,
        dimension: space.n_features(),
    }
}
