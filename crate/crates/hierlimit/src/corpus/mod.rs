//! Story corpora: loading, cleaning, variety merging, story-disjoint
//! splitting, English-contamination filtering, and parallel-segment
//! extraction from multilingual pages.

mod parallel;
mod segment;
mod split;

pub use parallel::{extract_parallel, ExtractOutcome};
pub use segment::{count_sentences, sentence_spans, sentences};
pub use split::{split, SplitOutcome, SplitSpec};

use crate::classifier::RootModel;
use crate::error::{Error, Result};
use crate::label::LanguageLabel;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Page {
    /// NFC-normalized text.
    pub text: String,
    /// Position in the story as published (dropped pages leave gaps).
    pub page_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Story {
    pub story_id: String,
    pub language: LanguageLabel,
    pub pages: Vec<Page>,
    pub metadata: BTreeMap<String, String>,
}

impl Story {
    pub fn text_sentences(&self) -> impl Iterator<Item = &str> {
        self.pages.iter().flat_map(|p| sentences(&p.text))
    }

    pub fn sentence_count(&self) -> usize {
        self.pages.iter().map(|p| count_sentences(&p.text)).sum()
    }
}

/// A story whose pages mix a low-resource and a high-resource language,
/// tagged `L1_L2` on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultilingualDoc {
    pub story_id: String,
    /// (low-resource, high-resource).
    pub languages: (LanguageLabel, LanguageLabel),
    pub pages: Vec<Page>,
    pub metadata: BTreeMap<String, String>,
}

/// An immutable collection of monolingual stories with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    stories: Vec<Story>,
}

fn check_unique_ids(stories: &[Story]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for story in stories {
        if !seen.insert(&story.story_id) {
            return Err(Error::Validation(format!(
                "duplicate story_id {:?}",
                story.story_id
            )));
        }
    }
    Ok(())
}

impl Corpus {
    pub fn new(stories: Vec<Story>) -> Result<Self> {
        check_unique_ids(&stories)?;
        if let Some(story) = stories.iter().find(|s| s.pages.is_empty()) {
            return Err(Error::Validation(format!(
                "story {:?} has no pages",
                story.story_id
            )));
        }
        Ok(Corpus { stories })
    }

    pub fn stories(&self) -> &[Story] {
        &self.stories
    }

    pub fn is_empty(&self) -> bool {
        self.stories.is_empty()
    }

    /// The label set, derived from the stories.
    pub fn labels(&self) -> BTreeSet<LanguageLabel> {
        self.stories.iter().map(|s| s.language.clone()).collect()
    }

    pub fn total_pages(&self) -> usize {
        self.stories.iter().map(|s| s.pages.len()).sum()
    }

    pub fn total_sentences(&self) -> usize {
        self.stories.iter().map(Story::sentence_count).sum()
    }

    pub fn stories_for<'a>(&'a self, label: &'a LanguageLabel) -> impl Iterator<Item = &'a Story> {
        self.stories.iter().filter(move |s| &s.language == label)
    }

    /// All sentences of a language, in (story_id, page, sentence) order.
    pub fn sentences_for(&self, label: &LanguageLabel) -> Vec<String> {
        let mut stories: Vec<&Story> = self.stories_for(label).collect();
        stories.sort_by(|a, b| a.story_id.cmp(&b.story_id));
        stories
            .iter()
            .flat_map(|s| s.text_sentences())
            .map(str::to_string)
            .collect()
    }

    /// Flatten into labeled examples at page or sentence granularity.
    /// Example ids are `story:page` or `story:page:sentence`.
    pub fn examples(&self, granularity: Granularity) -> Vec<LabeledExample> {
        let mut out = Vec::new();
        for story in &self.stories {
            for page in &story.pages {
                match granularity {
                    Granularity::Page => out.push(LabeledExample::new(
                        format!("{}:{}", story.story_id, page.page_index),
                        page.text.clone(),
                        story.language.clone(),
                    )),
                    Granularity::Sentence => {
                        for (si, sentence) in sentences(&page.text).iter().enumerate() {
                            out.push(LabeledExample::new(
                                format!("{}:{}:{}", story.story_id, page.page_index, si),
                                (*sentence).to_string(),
                                story.language.clone(),
                            ));
                        }
                    }
                }
            }
        }
        out
    }

    /// Stories restricted to the given label set.
    pub fn filter_languages(&self, keep: &BTreeSet<LanguageLabel>) -> Corpus {
        Corpus {
            stories: self
                .stories
                .iter()
                .filter(|s| keep.contains(&s.language))
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Page,
    Sentence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub label: LanguageLabel,
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: LanguageLabel) -> Self {
        LabeledExample {
            id: id.into(),
            text: text.into(),
            label,
        }
    }
}

/// On-disk story record: one JSON object per line, UTF-8.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoryRecord {
    story_id: String,
    language: String,
    pages: Vec<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub files: usize,
    pub stories: usize,
    pub multilingual_docs: usize,
    pub pages: usize,
    pub dropped_empty_stories: usize,
}

#[derive(Debug)]
pub struct CorpusLoad {
    pub corpus: Corpus,
    pub multilingual: Vec<MultilingualDoc>,
    pub report: LoadReport,
}

fn jsonl_files(root: &Path) -> Result<Vec<PathBuf>> {
    if root.is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(root, e))?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

/// A language code shaped `a_b` is a multilingual tag when its second
/// half names a monolingual language seen in the same load; otherwise it
/// is a variety code like `gon_bastar`.
fn split_multilingual_tag<'a>(
    code: &'a str,
    plain_languages: &BTreeSet<String>,
) -> Option<(&'a str, &'a str)> {
    let mut parts = code.split('_');
    let (a, b) = (parts.next()?, parts.next()?);
    if parts.next().is_some() || a == b {
        return None;
    }
    plain_languages.contains(b).then_some((a, b))
}

/// Load a story corpus from a `.jsonl` file or a directory of them.
///
/// Page text is NFC-normalized; empty pages and then empty stories are
/// dropped (counted in the report); `L1_L2`-tagged records are returned
/// separately as multilingual documents.
pub fn load_corpus(root: &Path) -> Result<CorpusLoad> {
    let files = jsonl_files(root)?;
    let mut records: Vec<(String, usize, StoryRecord)> = Vec::new();
    for file in &files {
        let content = fs::read_to_string(file).map_err(|e| {
            if e.kind() == std::io::ErrorKind::InvalidData {
                Error::parse(file.display().to_string(), 0, "file is not valid UTF-8")
            } else {
                Error::io(file, e)
            }
        })?;
        let name = file.display().to_string();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: StoryRecord = serde_json::from_str(line)
                .map_err(|e| Error::parse(&name, i + 1, e.to_string()))?;
            records.push((name.clone(), i + 1, record));
        }
    }

    let plain_languages: BTreeSet<String> = records
        .iter()
        .filter(|(_, _, r)| !r.language.contains('_'))
        .map(|(_, _, r)| r.language.clone())
        .collect();

    let mut stories = Vec::new();
    let mut multilingual = Vec::new();
    let mut seen_ids = BTreeSet::new();
    let mut report = LoadReport {
        files: files.len(),
        ..LoadReport::default()
    };

    for (file, line, record) in records {
        if !seen_ids.insert(record.story_id.clone()) {
            return Err(Error::Validation(format!(
                "duplicate story_id {:?} ({file} line {line})",
                record.story_id
            )));
        }
        let pages: Vec<Page> = record
            .pages
            .iter()
            .enumerate()
            .map(|(i, text)| Page {
                text: text.nfc().collect(),
                page_index: i,
            })
            .filter(|p| !p.text.trim().is_empty())
            .collect();
        if pages.is_empty() {
            report.dropped_empty_stories += 1;
            continue;
        }
        report.pages += pages.len();

        match split_multilingual_tag(&record.language, &plain_languages) {
            Some((low, high)) => {
                let low = LanguageLabel::new(low)
                    .map_err(|e| Error::parse(&file, line, e.to_string()))?;
                let high = LanguageLabel::new(high)
                    .map_err(|e| Error::parse(&file, line, e.to_string()))?;
                report.multilingual_docs += 1;
                multilingual.push(MultilingualDoc {
                    story_id: record.story_id,
                    languages: (low, high),
                    pages,
                    metadata: record.metadata,
                });
            }
            None => {
                let language = LanguageLabel::new(record.language.as_str())
                    .map_err(|e| Error::parse(&file, line, e.to_string()))?;
                report.stories += 1;
                stories.push(Story {
                    story_id: record.story_id,
                    language,
                    pages,
                    metadata: record.metadata,
                });
            }
        }
    }

    Ok(CorpusLoad {
        corpus: Corpus::new(stories)?,
        multilingual,
        report,
    })
}

/// Write stories (and multilingual docs) back out as JSONL, one record per
/// line in the order given.
pub fn write_corpus_jsonl(
    corpus: &Corpus,
    multilingual: &[MultilingualDoc],
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    for story in corpus.stories() {
        let record = StoryRecord {
            story_id: story.story_id.clone(),
            language: story.language.to_string(),
            pages: story.pages.iter().map(|p| p.text.clone()).collect(),
            metadata: story.metadata.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("story serialization"));
        out.push('\n');
    }
    for doc in multilingual {
        let record = StoryRecord {
            story_id: doc.story_id.clone(),
            language: format!("{}_{}", doc.languages.0, doc.languages.1),
            pages: doc.pages.iter().map(|p| p.text.clone()).collect(),
            metadata: doc.metadata.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("story serialization"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// A variety-merge rule: relabel `from` to `to` when `from` is below the
/// sentence cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeRule {
    pub from: LanguageLabel,
    pub to: LanguageLabel,
    #[serde(default)]
    pub reason: String,
}

pub fn read_merge_rules(path: &Path) -> Result<Vec<MergeRule>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::parse(path.display().to_string(), e.line(), e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeLogEntry {
    pub from: LanguageLabel,
    pub to: LanguageLabel,
    /// False when the variety kept its own label by passing the cutoff.
    pub applied: bool,
    pub stories: usize,
    pub sentences: usize,
}

#[derive(Debug)]
pub struct MergeOutcome {
    pub corpus: Corpus,
    pub log: Vec<MergeLogEntry>,
    pub warnings: Vec<String>,
}

/// Merge low-data language varieties into their parent label.
///
/// Varieties with at least `cutoff` sentences keep their own label; those
/// below the cutoff are relabeled to the rule's target. Rules referencing
/// absent labels produce warnings, not failures.
pub fn merge_varieties(
    corpus: &Corpus,
    rules: &[MergeRule],
    cutoff: usize,
) -> Result<MergeOutcome> {
    let mut froms = BTreeSet::new();
    let mut tos = BTreeSet::new();
    for rule in rules {
        if rule.from == rule.to {
            return Err(Error::Validation(format!(
                "merge rule maps {} onto itself",
                rule.from
            )));
        }
        if !froms.insert(&rule.from) {
            return Err(Error::Validation(format!(
                "two merge rules share the source label {}",
                rule.from
            )));
        }
        tos.insert(&rule.to);
    }
    if let Some(label) = froms.intersection(&tos).next() {
        return Err(Error::Validation(format!(
            "merge rules are cyclic: {label} is both a source and a target"
        )));
    }

    let mut sentence_counts: BTreeMap<&LanguageLabel, usize> = BTreeMap::new();
    let mut story_counts: BTreeMap<&LanguageLabel, usize> = BTreeMap::new();
    for story in corpus.stories() {
        *sentence_counts.entry(&story.language).or_insert(0) += story.sentence_count();
        *story_counts.entry(&story.language).or_insert(0) += 1;
    }

    let mut relabel: BTreeMap<LanguageLabel, LanguageLabel> = BTreeMap::new();
    let mut log = Vec::new();
    let mut warnings = Vec::new();
    for rule in rules {
        let Some(&count) = sentence_counts.get(&rule.from) else {
            warnings.push(format!(
                "merge rule {} -> {} references a label absent from the corpus",
                rule.from, rule.to
            ));
            continue;
        };
        let applied = count < cutoff;
        if applied {
            relabel.insert(rule.from.clone(), rule.to.clone());
        }
        log.push(MergeLogEntry {
            from: rule.from.clone(),
            to: rule.to.clone(),
            applied,
            stories: story_counts[&rule.from],
            sentences: count,
        });
    }

    let stories = corpus
        .stories()
        .iter()
        .map(|story| {
            let mut story = story.clone();
            if let Some(target) = relabel.get(&story.language) {
                story.language = target.clone();
            }
            story
        })
        .collect();
    Ok(MergeOutcome {
        corpus: Corpus::new(stories)?,
        log,
        warnings,
    })
}

#[derive(Debug)]
pub struct EnglishFilterOutcome {
    pub kept: Corpus,
    pub flagged: Vec<String>,
}

/// Flag non-English stories whose pages are mostly confidently classified
/// as English, and drop them from the corpus.
///
/// A story is flagged when strictly more than `story_fraction` of its
/// pages get label `eng` with posterior at least `page_confidence`.
/// Detectors that report no posterior count as fully confident.
pub fn english_filter(
    corpus: &Corpus,
    detector: &dyn RootModel,
    page_confidence: f64,
    story_fraction: f64,
) -> Result<EnglishFilterOutcome> {
    let eng = LanguageLabel::new("eng")?;
    if !detector.supported_labels().contains(&eng) {
        return Err(Error::Config(
            "the English filter needs a detector supporting label `eng`".into(),
        ));
    }
    if !(0.0..=1.0).contains(&page_confidence) || !(0.0..=1.0).contains(&story_fraction) {
        return Err(Error::Validation(
            "page_confidence and story_fraction must lie in [0, 1]".into(),
        ));
    }

    let mut kept = Vec::new();
    let mut flagged = Vec::new();
    for story in corpus.stories() {
        if story.language == eng {
            kept.push(story.clone());
            continue;
        }
        let english_pages = story
            .pages
            .iter()
            .filter(|page| {
                let prediction = detector.predict(&page.text);
                prediction.label == eng
                    && prediction.posterior.unwrap_or(1.0) >= page_confidence
            })
            .count();
        if english_pages as f64 > story_fraction * story.pages.len() as f64 {
            flagged.push(story.story_id.clone());
        } else {
            kept.push(story.clone());
        }
    }
    Ok(EnglishFilterOutcome {
        kept: Corpus::new(kept)?,
        flagged,
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn story(id: &str, lang: &str, pages: &[&str]) -> Story {
        Story {
            story_id: id.to_string(),
            language: LanguageLabel::new(lang).unwrap(),
            pages: pages
                .iter()
                .enumerate()
                .map(|(i, text)| Page {
                    text: (*text).to_string(),
                    page_index: i,
                })
                .collect(),
            metadata: BTreeMap::new(),
        }
    }
}
