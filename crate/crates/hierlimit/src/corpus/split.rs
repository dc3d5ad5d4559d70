//! Story-disjoint train/test splitting with a sentence-level holdout for
//! low-resource languages.

use crate::corpus::segment::sentences;
use crate::corpus::{Corpus, Page, Story};
use crate::error::{Error, Result};
use crate::label::LanguageLabel;
use crate::util::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    /// Whole stories accumulate into test until this many pages are held
    /// out per language.
    pub test_pages_per_language: usize,
    /// Languages with fewer total sentences than this switch to the
    /// sentence-level holdout.
    pub low_resource_sentence_threshold: usize,
    /// Sentences withheld per low-resource language.
    pub low_resource_test_sentences: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_pages_per_language: 50,
            low_resource_sentence_threshold: 200,
            low_resource_test_sentences: 10,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.test_pages_per_language == 0
            || self.low_resource_sentence_threshold == 0
            || self.low_resource_test_sentences == 0
        {
            return Err(Error::Validation("split spec counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SplitOutcome {
    pub train: Corpus,
    pub test: Corpus,
    pub warnings: Vec<String>,
}

/// Split a corpus per language into story-disjoint train and test sets.
///
/// Stories are ordered by a seeded per-story key (ties by ascending
/// story_id) and accumulate into test until the page target is met.
/// Languages below the sentence threshold instead withhold exactly
/// `low_resource_test_sentences` sentences; the source stories stay in
/// train with those sentences removed.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitOutcome> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::Validation("cannot split an empty corpus".into()));
    }

    let existing_ids: BTreeSet<&str> = corpus
        .stories()
        .iter()
        .map(|s| s.story_id.as_str())
        .collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut warnings = Vec::new();

    for label in corpus.labels() {
        let mut stories: Vec<&Story> = corpus.stories_for(&label).collect();
        stories.sort_by(|a, b| a.story_id.cmp(&b.story_id));
        let total_sentences: usize = stories.iter().map(|s| s.sentence_count()).sum();

        if total_sentences < spec.low_resource_sentence_threshold {
            low_resource_split(
                &label,
                &stories,
                spec,
                &existing_ids,
                &mut train,
                &mut test,
                &mut warnings,
            );
            continue;
        }

        let mut keyed: Vec<(u64, &Story)> = stories
            .iter()
            .map(|s| {
                let key = derive_seed(spec.seed, &format!("split:{label}:{}", s.story_id));
                (key, *s)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.story_id.cmp(&b.1.story_id)));

        let mut test_pages = 0;
        let mut chosen: Vec<&Story> = Vec::new();
        let mut rest: Vec<&Story> = Vec::new();
        for (_, story) in keyed {
            if test_pages < spec.test_pages_per_language {
                test_pages += story.pages.len();
                chosen.push(story);
            } else {
                rest.push(story);
            }
        }
        if test_pages < spec.test_pages_per_language {
            warnings.push(format!(
                "language {label} has only {test_pages} pages; the whole language goes to test"
            ));
        } else if rest.is_empty() {
            warnings.push(format!(
                "language {label} has no training stories left after the test holdout"
            ));
        }
        chosen.sort_by(|a, b| a.story_id.cmp(&b.story_id));
        rest.sort_by(|a, b| a.story_id.cmp(&b.story_id));
        test.extend(chosen.into_iter().cloned());
        train.extend(rest.into_iter().cloned());
    }

    Ok(SplitOutcome {
        train: Corpus::new(train)?,
        test: Corpus::new(test)?,
        warnings,
    })
}

fn low_resource_split(
    label: &LanguageLabel,
    stories: &[&Story],
    spec: &SplitSpec,
    existing_ids: &BTreeSet<&str>,
    train: &mut Vec<Story>,
    test: &mut Vec<Story>,
    warnings: &mut Vec<String>,
) {
    // Flatten to (story, page, sentence) references in canonical order.
    let mut refs: Vec<(usize, usize, usize, String)> = Vec::new();
    for (si, story) in stories.iter().enumerate() {
        for (pi, page) in story.pages.iter().enumerate() {
            for (xi, sentence) in sentences(&page.text).iter().enumerate() {
                refs.push((si, pi, xi, (*sentence).to_string()));
            }
        }
    }
    let wanted = spec.low_resource_test_sentences;
    if refs.len() < wanted {
        warnings.push(format!(
            "language {label} has only {} sentences; withholding all of them for test",
            refs.len()
        ));
    }
    let take = wanted.min(refs.len());

    let mut order: Vec<usize> = (0..refs.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(spec.seed, &format!("lowres:{label}")));
    order.shuffle(&mut rng);
    let mut chosen: Vec<usize> = order.into_iter().take(take).collect();
    chosen.sort_unstable();
    let chosen_set: BTreeSet<usize> = chosen.iter().copied().collect();

    let mut test_id = format!("{label}.lowres-test");
    while existing_ids.contains(test_id.as_str()) {
        test_id.push('x');
    }
    let test_pages: Vec<Page> = chosen
        .iter()
        .enumerate()
        .map(|(i, &r)| Page {
            text: refs[r].3.clone(),
            page_index: i,
        })
        .collect();
    test.push(Story {
        story_id: test_id,
        language: label.clone(),
        pages: test_pages,
        metadata: [(
            "holdout".to_string(),
            "low-resource sentence sample".to_string(),
        )]
        .into_iter()
        .collect(),
    });

    // Rebuild the source stories without the withheld sentences.
    for (si, story) in stories.iter().enumerate() {
        let mut pages = Vec::new();
        for (pi, page) in story.pages.iter().enumerate() {
            let kept: Vec<&str> = sentences(&page.text)
                .into_iter()
                .enumerate()
                .filter(|(xi, _)| {
                    let global = refs
                        .iter()
                        .position(|&(s, p, x, _)| s == si && p == pi && x == *xi)
                        .expect("sentence reference exists");
                    !chosen_set.contains(&global)
                })
                .map(|(_, s)| s)
                .collect();
            if kept.is_empty() {
                continue;
            }
            pages.push(Page {
                text: kept.join(" "),
                page_index: page.page_index,
            });
        }
        if pages.is_empty() {
            warnings.push(format!(
                "story {} lost all sentences to the low-resource holdout",
                story.story_id
            ));
            continue;
        }
        train.push(Story {
            story_id: story.story_id.clone(),
            language: story.language.clone(),
            pages,
            metadata: story.metadata.clone(),
        });
    }
}
