//! Deterministic generator of confusable artificial languages.
//!
//! Produces three sibling pairs on three scripts (Latin, Cyrillic,
//! Greek). Siblings share a character inventory and syllable statistics
//! but draw their words from disjoint lexicons, so coarse character
//! features confuse them while word features tell them apart. The first
//! sibling of each pair is intended as a root-supported language; the
//! second plays the unsupported low-resource role.
//!
//! Sentences follow a rigid positional grammar (word classes cycle
//! through fixed slots), which keeps the distinct word-bigram count small
//! the way real syntax does.

use crate::classifier::{ReductionConfig, TrainConfig};
use crate::corpus::{Corpus, Page, Story};
use crate::features::{BalanceConfig, FeatureConfig};
use crate::label::LanguageLabel;
use crate::util::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeMap, BTreeSet};

const SENTENCES_PER_PAGE: usize = 1;
const PAGES_PER_STORY: usize = 10;
/// Word classes per language; sentence position i draws from class
/// i mod WORD_CLASSES.
const WORD_CLASSES: usize = 6;
const WORDS_PER_CLASS: usize = 6;
const CODA_PROBABILITY: f64 = 0.4;

struct Script {
    consonants: &'static [char],
    vowels: &'static [char],
}

const SCRIPTS: [Script; 3] = [
    Script {
        consonants: &['b', 'c', 'd', 'f', 'g', 'h', 'j', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v'],
        vowels: &['a', 'e', 'i', 'o', 'u'],
    },
    Script {
        consonants: &['б', 'в', 'г', 'д', 'ж', 'з', 'к', 'л', 'м', 'н', 'п', 'р', 'с', 'т', 'ф', 'ч'],
        vowels: &['а', 'е', 'и', 'о', 'у'],
    },
    Script {
        consonants: &['β', 'γ', 'δ', 'ζ', 'θ', 'κ', 'λ', 'μ', 'ν', 'π', 'ρ', 'σ', 'τ', 'φ', 'χ', 'ψ'],
        vowels: &['α', 'ε', 'ι', 'ο', 'υ'],
    },
];

const PAIR_LABELS: [(&str, &str); 3] = [("kora", "kosa"), ("mira", "misa"), ("tela", "tesa")];

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_sentences_per_language: usize,
    pub dev_sentences_per_language: usize,
    pub test_sentences_per_language: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            train_sentences_per_language: 2000,
            dev_sentences_per_language: 200,
            test_sentences_per_language: 200,
        }
    }
}

#[derive(Debug)]
pub struct SynthFixture {
    pub train: Corpus,
    /// Held-out development split for measuring root confusion without
    /// touching the test set.
    pub dev: Corpus,
    pub test: Corpus,
    /// (root-supported sibling, shadow sibling) per pair.
    pub pairs: Vec<(LanguageLabel, LanguageLabel)>,
}

impl SynthFixture {
    /// The languages the root model is meant to be trained on.
    pub fn root_languages(&self) -> BTreeSet<LanguageLabel> {
        self.pairs.iter().map(|(primary, _)| primary.clone()).collect()
    }

    pub fn all_languages(&self) -> BTreeSet<LanguageLabel> {
        self.pairs
            .iter()
            .flat_map(|(a, b)| [a.clone(), b.clone()])
            .collect()
    }
}

fn sample_word(rng: &mut ChaCha20Rng, script: &Script) -> String {
    let syllables = if rng.random::<f64>() < 0.5 { 3 } else { 4 };
    let mut word = String::new();
    for _ in 0..syllables {
        word.push(script.consonants[rng.random_range(0..script.consonants.len())]);
        word.push(script.vowels[rng.random_range(0..script.vowels.len())]);
        if rng.random::<f64>() < CODA_PROBABILITY {
            word.push(script.consonants[rng.random_range(0..script.consonants.len())]);
        }
    }
    word
}

/// A lexicon is a fixed array of word classes.
type Lexicon = Vec<Vec<String>>;

/// Two disjoint class-structured lexicons drawn from one shared syllable
/// distribution.
fn pair_lexicons(seed: u64, pair: usize) -> (Lexicon, Lexicon) {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, &format!("lexicon:{pair}")));
    let script = &SCRIPTS[pair];
    let mut seen = BTreeSet::new();
    let mut words = Vec::new();
    while words.len() < 2 * WORD_CLASSES * WORDS_PER_CLASS {
        let word = sample_word(&mut rng, script);
        if seen.insert(word.clone()) {
            words.push(word);
        }
    }
    // Alternate assignment keeps the two distributions aligned.
    let mut first = vec![Vec::new(); WORD_CLASSES];
    let mut second = vec![Vec::new(); WORD_CLASSES];
    for (i, word) in words.into_iter().enumerate() {
        let class = (i / 2) % WORD_CLASSES;
        if i % 2 == 0 {
            first[class].push(word);
        } else {
            second[class].push(word);
        }
    }
    (first, second)
}

/// Sentences start at slot 0 and cycle through the word classes, drawing
/// uniformly within each class.
fn sentence(rng: &mut ChaCha20Rng, lexicon: &Lexicon) -> String {
    let n_words = rng.random_range(7..=9);
    let mut words = Vec::with_capacity(n_words);
    for position in 0..n_words {
        let class = &lexicon[position % WORD_CLASSES];
        words.push(class[rng.random_range(0..class.len())].as_str());
    }
    format!("{}.", words.join(" "))
}

fn stories_for(
    label: &LanguageLabel,
    split: &str,
    n_sentences: usize,
    seed: u64,
    lexicon: &Lexicon,
) -> Vec<Story> {
    let mut rng =
        ChaCha20Rng::seed_from_u64(derive_seed(seed, &format!("text:{label}:{split}")));
    let sentences: Vec<String> = (0..n_sentences)
        .map(|_| sentence(&mut rng, lexicon))
        .collect();

    sentences
        .chunks(SENTENCES_PER_PAGE * PAGES_PER_STORY)
        .enumerate()
        .map(|(si, chunk)| Story {
            story_id: format!("{label}-{split}-{si:04}"),
            language: label.clone(),
            pages: chunk
                .chunks(SENTENCES_PER_PAGE)
                .enumerate()
                .map(|(pi, page)| Page {
                    text: page.join(" "),
                    page_index: pi,
                })
                .collect(),
            metadata: BTreeMap::from([("origin".to_string(), "synthetic".to_string())]),
        })
        .collect()
}

/// Generate the six-language fixture: three confusable sibling pairs with
/// train/dev/test splits. Fully determined by the config.
pub fn generate(cfg: &SynthConfig) -> SynthFixture {
    let mut train = Vec::new();
    let mut dev = Vec::new();
    let mut test = Vec::new();
    let mut pairs = Vec::new();

    for (pair, (primary_name, shadow_name)) in PAIR_LABELS.iter().enumerate() {
        let primary = LanguageLabel::new(*primary_name).expect("static label");
        let shadow = LanguageLabel::new(*shadow_name).expect("static label");
        let (primary_lexicon, shadow_lexicon) = pair_lexicons(cfg.seed, pair);
        for (label, lexicon) in [(&primary, &primary_lexicon), (&shadow, &shadow_lexicon)] {
            train.extend(stories_for(
                label,
                "train",
                cfg.train_sentences_per_language,
                cfg.seed,
                lexicon,
            ));
            dev.extend(stories_for(
                label,
                "dev",
                cfg.dev_sentences_per_language,
                cfg.seed,
                lexicon,
            ));
            test.extend(stories_for(
                label,
                "test",
                cfg.test_sentences_per_language,
                cfg.seed,
                lexicon,
            ));
        }
        pairs.push((primary, shadow));
    }

    SynthFixture {
        train: Corpus::new(train).expect("generated ids are unique"),
        dev: Corpus::new(dev).expect("generated ids are unique"),
        test: Corpus::new(test).expect("generated ids are unique"),
        pairs,
    }
}

/// The deliberately coarse root recipe used by the benchmark: character
/// 1-2 grams, incremental PCA at 90% variance, majority-matching
/// oversampling.
pub fn coarse_root_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        features: FeatureConfig {
            char_ngram_range: Some((1, 2)),
            word_ngram_range: None,
            min_doc_frequency: 1,
            max_features: None,
            lowercase: true,
        },
        reduction: Some(ReductionConfig {
            variance_target: 0.9,
            batch_size: 512,
        }),
        balance: Some(BalanceConfig {
            k_neighbors: 5,
            target_count: crate::features::TargetCount::MatchMajority,
            seed,
        }),
        balance_pre_projection: false,
        alpha: 1.0,
        allow_unknown_label: false,
    }
}
