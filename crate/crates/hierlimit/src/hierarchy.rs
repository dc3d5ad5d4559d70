//! Confusion-resolution units and the two-level hierarchical predictor.
//!
//! The root produces a prior label; when that label triggers a unit, the
//! unit re-classifies the text within its cluster and its output is final.
//! Exactly zero or one unit is consulted per prediction.

use crate::classifier::{nb_fit_declared, nb_fit_sparse, Pipeline, Root, RootPrediction};
use crate::confusion::Cluster;
use crate::corpus::{Corpus, LabeledExample};
use crate::error::{Error, Result};
use crate::features::{fit_ipca, fit_vocab, vectorize, CountVector, FeatureConfig};
use crate::label::LanguageLabel;
use crate::util::derive_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Training recipe for a resolution unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitConfig {
    pub char_ngram_range: Option<(usize, usize)>,
    pub word_ngram_range: Option<(usize, usize)>,
    pub max_sentences_per_language: usize,
    pub alpha: f64,
    /// Units are flat Naive Bayes by default; projection is available for
    /// parity experiments.
    pub use_projection: bool,
    pub seed: u64,
}

impl Default for UnitConfig {
    fn default() -> Self {
        UnitConfig {
            char_ngram_range: Some((2, 4)),
            word_ngram_range: Some((1, 2)),
            max_sentences_per_language: 1000,
            alpha: 1.0,
            use_projection: false,
            seed: 0,
        }
    }
}

impl UnitConfig {
    fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            char_ngram_range: self.char_ngram_range,
            word_ngram_range: self.word_ngram_range,
            min_doc_frequency: 1,
            max_features: None,
            lowercase: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.feature_config().validate()?;
        if self.max_sentences_per_language == 0 {
            return Err(Error::Config(
                "max_sentences_per_language must be positive".into(),
            ));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        Ok(())
    }
}

/// A small classifier over one confused cluster.
#[derive(Debug, Clone)]
pub struct Unit {
    cluster: Cluster,
    pipeline: Pipeline,
}

impl Unit {
    pub fn new(cluster: Cluster, pipeline: Pipeline) -> Result<Self> {
        let pipeline_labels: BTreeSet<LanguageLabel> =
            pipeline.labels().iter().cloned().collect();
        if pipeline_labels != cluster.members {
            return Err(Error::Validation(format!(
                "unit pipeline labels do not match cluster {} members",
                cluster.id
            )));
        }
        Ok(Unit { cluster, pipeline })
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn id(&self) -> &str {
        &self.cluster.id
    }
}

/// Train a resolution unit over a cluster, sampling up to
/// `max_sentences_per_language` sentences per member (seeded, per-member
/// streams).
pub fn train_unit(cluster: &Cluster, train: &Corpus, cfg: &UnitConfig) -> Result<Unit> {
    cfg.validate()?;
    let mut texts = Vec::new();
    let mut labels = Vec::new();
    for member in &cluster.members {
        let mut sentences = train.sentences_for(member);
        if sentences.len() < 2 {
            return Err(Error::Training(format!(
                "language {member} has {} training sentence(s); a unit needs at least 2",
                sentences.len()
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &format!("unit:{}:{member}", cluster.id),
        ));
        sentences.shuffle(&mut rng);
        sentences.truncate(cfg.max_sentences_per_language);
        for sentence in sentences {
            texts.push(sentence);
            labels.push(member.clone());
        }
    }

    let space = fit_vocab(texts.iter().map(String::as_str), &cfg.feature_config())?;
    let vectors: Vec<CountVector> = texts.iter().map(|t| vectorize(&space, t)).collect();
    let (projector, model) = if cfg.use_projection {
        let projector = fit_ipca(&vectors, 0.9, 512)?;
        let projected: Vec<Vec<f64>> = vectors
            .iter()
            .map(|v| projector.project(v))
            .collect::<Result<_>>()?;
        let model = nb_fit_declared(&projected, &labels, &cluster.members, cfg.alpha)?;
        (Some(projector), model)
    } else {
        (
            None,
            nb_fit_sparse(&vectors, &labels, &cluster.members, cfg.alpha)?,
        )
    };
    Unit::new(cluster.clone(), Pipeline::new(space, projector, model)?)
}

/// Which path produced a hierarchical prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    RootOnly,
    Unit(String),
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Route::RootOnly => f.write_str("root-only"),
            Route::Unit(id) => f.write_str(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierPrediction {
    pub label: LanguageLabel,
    pub posterior: Option<f64>,
    pub route: Route,
}

/// Root model plus a routing table from trigger labels to resolution
/// units.
#[derive(Debug, Clone)]
pub struct HierModel {
    root: Root,
    routing: BTreeMap<LanguageLabel, String>,
    units: BTreeMap<String, Unit>,
}

impl HierModel {
    pub fn root(&self) -> &Root {
        &self.root
    }

    pub fn routing(&self) -> &BTreeMap<LanguageLabel, String> {
        &self.routing
    }

    pub fn units(&self) -> &BTreeMap<String, Unit> {
        &self.units
    }

    /// Labels the hierarchy can emit: root-supported plus all cluster
    /// members.
    pub fn coverage(&self) -> BTreeSet<LanguageLabel> {
        let mut coverage = self.root.supported_labels();
        for unit in self.units.values() {
            coverage.extend(unit.cluster.members.iter().cloned());
        }
        coverage
    }

    /// The routing table as a JSON object, trigger -> unit id.
    pub fn routing_json(&self) -> String {
        let map: BTreeMap<String, String> = self
            .routing
            .iter()
            .map(|(trigger, unit)| (trigger.to_string(), unit.clone()))
            .collect();
        serde_json::to_string_pretty(&map).expect("routing serialization")
    }

    pub fn predict(&self, text: &str) -> Result<HierPrediction> {
        hier_predict(self, text)
    }

    /// Example-id-aware prediction, required when the root is a replay
    /// table.
    pub fn predict_example(&self, example: &LabeledExample) -> Result<HierPrediction> {
        let prior = self.root.predict_example(example)?;
        Ok(self.resolve(prior, &example.text))
    }

    fn resolve(&self, prior: RootPrediction, text: &str) -> HierPrediction {
        match self.routing.get(&prior.label) {
            Some(unit_id) => {
                let unit = &self.units[unit_id];
                let (label, posterior) = unit.pipeline.predict(text);
                HierPrediction {
                    label,
                    posterior: Some(posterior),
                    route: Route::Unit(unit_id.clone()),
                }
            }
            None => HierPrediction {
                label: prior.label,
                posterior: prior.posterior,
                route: Route::RootOnly,
            },
        }
    }
}

/// Build the hierarchical model, validating that clusters are pairwise
/// disjoint and every trigger is root-supported.
pub fn assemble(root: Root, units: Vec<Unit>) -> Result<HierModel> {
    let supported = root.supported_labels();
    let mut seen_members: BTreeSet<&LanguageLabel> = BTreeSet::new();
    let mut routing = BTreeMap::new();
    for unit in &units {
        for member in &unit.cluster.members {
            if !seen_members.insert(member) {
                return Err(Error::Validation(format!(
                    "clusters overlap on {member}; adjust the confusion threshold"
                )));
            }
        }
        if unit.cluster.triggers.is_empty() {
            return Err(Error::Validation(format!(
                "cluster {} has no triggers; it is unreachable",
                unit.cluster.id
            )));
        }
        for trigger in &unit.cluster.triggers {
            if !supported.contains(trigger) {
                return Err(Error::Validation(format!(
                    "trigger {trigger} of cluster {} is not root-supported",
                    unit.cluster.id
                )));
            }
            routing.insert(trigger.clone(), unit.cluster.id.clone());
        }
    }
    let units = units
        .into_iter()
        .map(|u| (u.cluster.id.clone(), u))
        .collect();
    Ok(HierModel {
        root,
        routing,
        units,
    })
}

/// Two-level prediction: root first, then at most one unit.
pub fn hier_predict(model: &HierModel, text: &str) -> Result<HierPrediction> {
    let prior = model.root.predict_text(text)?;
    Ok(model.resolve(prior, text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train_pipeline, RootModel, TrainConfig};
    use crate::corpus::{Granularity, Page, Story};

    fn label(s: &str) -> LanguageLabel {
        LanguageLabel::new(s).unwrap()
    }

    fn story(id: &str, lang: &str, sentences: &[String]) -> Story {
        Story {
            story_id: id.to_string(),
            language: label(lang),
            pages: sentences
                .chunks(4)
                .enumerate()
                .map(|(i, chunk)| Page {
                    text: chunk.join(" "),
                    page_index: i,
                })
                .collect(),
            metadata: BTreeMap::new(),
        }
    }

    /// Three toy languages sharing one alphabet. "tira" and "sila" share
    /// character statistics but use disjoint words; "amha" is distinct.
    fn fixture_corpus() -> Corpus {
        let amha: Vec<String> = (0..30).map(|i| format!("ama maa am{} ma.", i % 3)).collect();
        let tira: Vec<String> = (0..30)
            .map(|i| format!("tiri riti tir{} ri.", i % 3))
            .collect();
        let sila: Vec<String> = (0..30)
            .map(|i| format!("irit itir rit{} it.", i % 3))
            .collect();
        Corpus::new(vec![
            story("amha-0", "amha", &amha),
            story("tira-0", "tira", &tira),
            story("sila-0", "sila", &sila),
        ])
        .unwrap()
    }

    fn fixture_root(corpus: &Corpus) -> Pipeline {
        // Root sees only amha and tira; sila is unsupported.
        let keep: BTreeSet<LanguageLabel> = [label("amha"), label("tira")].into_iter().collect();
        let examples = corpus.filter_languages(&keep).examples(Granularity::Sentence);
        train_pipeline(
            &examples,
            &TrainConfig {
                features: FeatureConfig::chars(1, 2),
                reduction: None,
                balance: None,
                balance_pre_projection: false,
                alpha: 1.0,
                allow_unknown_label: false,
            },
        )
        .unwrap()
    }

    fn fixture_cluster(supported: &BTreeSet<LanguageLabel>) -> Cluster {
        let members: BTreeSet<LanguageLabel> =
            [label("amha"), label("tira"), label("sila")].into_iter().collect();
        Cluster::new(members, supported)
    }

    #[test]
    fn trains_a_unit_over_all_cluster_members() {
        let corpus = fixture_corpus();
        let root = fixture_root(&corpus);
        let cluster = fixture_cluster(&RootModel::supported_labels(&root));
        let unit = train_unit(&cluster, &corpus, &UnitConfig::default()).unwrap();
        assert_eq!(unit.pipeline().labels().len(), 3);
        assert_eq!(unit.id(), "amha-sila-tira");
    }

    #[test]
    fn member_without_sentences_fails_by_name() {
        let corpus = fixture_corpus();
        let mut members = fixture_cluster(&BTreeSet::new()).members;
        members.insert(label("ghost"));
        let cluster = Cluster::new(members, &BTreeSet::new());
        let err = train_unit(&cluster, &corpus, &UnitConfig::default()).unwrap_err();
        assert!(err.to_string().contains("ghost"), "{err}");
    }

    #[test]
    fn sentence_sampling_is_deterministic() {
        let corpus = fixture_corpus();
        let root = fixture_root(&corpus);
        let cluster = fixture_cluster(&RootModel::supported_labels(&root));
        let cfg = UnitConfig {
            max_sentences_per_language: 10,
            seed: 5,
            ..UnitConfig::default()
        };
        let a = train_unit(&cluster, &corpus, &cfg).unwrap();
        let b = train_unit(&cluster, &corpus, &cfg).unwrap();
        assert_eq!(
            a.pipeline().model().feature_log_prob(),
            b.pipeline().model().feature_log_prob()
        );
       assert_eq!(
            a.pipeline().model().class_log_prior(),
            b.pipeline().model().class_log_prior()
        );
    }

    #[test]
    fn assemble_rejects_overlaps_and_foreign_triggers() {
        let corpus = fixture_corpus();
        let root = fixture_root(&corpus);
        let supported = RootModel::supported_labels(&root);
        let cluster = fixture_cluster(&supported);
        let unit = train_unit(&cluster, &corpus, &UnitConfig::default()).unwrap();
        let overlapping = unit.clone();
        let err = assemble(
            Root::Pipeline(root.clone()),
            vec![unit.clone(), overlapping],
        )
        .unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");

        // A trigger outside the root's label set must be rejected.
        let foreign: BTreeSet<LanguageLabel> = [label("zzz")].into_iter().collect();
        let mut bad_cluster = cluster.clone();
        bad_cluster.triggers = foreign;
        let bad_unit = Unit::new(bad_cluster, unit.pipeline().clone()).unwrap();
        let err = assemble(Root::Pipeline(root), vec![bad_unit]).unwrap_err();
        assert!(err.to_string().contains("not root-supported"), "{err}");
    }

    #[test]
    fn empty_unit_list_is_a_pure_pass_through() {
        let corpus = fixture_corpus();
        let root = fixture_root(&corpus);
        let hier = assemble(Root::Pipeline(root.clone()), Vec::new()).unwrap();
        for example in corpus.examples(Granularity::Sentence) {
            let expected = RootModel::predict(&root, &example.text);
            let got = hier.predict(&example.text).unwrap();
            assert_eq!(got.label, expected.label);
            assert_eq!(got.route, Route::RootOnly);
        }
    }

    #[test]
    fn routing_covers_all_triggers_of_disjoint_units() {
        let corpus = fixture_corpus();
        let root = fixture_root(&corpus);
        let supported = RootModel::supported_labels(&root);
        let cluster_a = Cluster::new(
            [label("amha"), label("sila")].into_iter().collect(),
            &supported,
        );
        let cluster_b = Cluster::new(
            [label("tira"), label("xela")].into_iter().collect(),
            &supported,
        );
        // Give xela some sentences so its unit can train.
        let mut stories = corpus.stories().to_vec();
        let xela: Vec<String> = (0..8).map(|i| format!("xe la xela{i}.")).collect();
        stories.push(story("xela-0", "xela", &xela));
        let corpus = Corpus::new(stories).unwrap();

        let unit_a = train_unit(&cluster_a, &corpus, &UnitConfig::default()).unwrap();
        let unit_b = train_unit(&cluster_b, &corpus, &UnitConfig::default()).unwrap();
        let hier = assemble(Root::Pipeline(root), vec![unit_a, unit_b]).unwrap();
        assert_eq!(hier.routing().len(), 2);
        assert_eq!(hier.routing()[&label("amha")], "amha-sila");
        assert_eq!(hier.routing()[&label("tira")], "tira-xela");

        let parsed: BTreeMap<String, String> =
            serde_json::from_str(&hier.routing_json()).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed["tira"], "tira-xela");
    }

    #[test]
    fn unit_extends_coverage_to_unsupported_languages() {
        let corpus = fixture_corpus();
        let root = fixture_root(&corpus);
        let supported = RootModel::supported_labels(&root);
        assert!(!supported.contains(&label("sila")));

        let cluster = fixture_cluster(&supported);
        let unit = train_unit(&cluster, &corpus, &UnitConfig::default()).unwrap();
        let hier = assemble(Root::Pipeline(root.clone()), vec![unit]).unwrap();

        assert!(hier.coverage().contains(&label("sila")));

        // A sila sentence: the root cannot emit sila, the unit can.
        let text = "irit itir rit1 it.";
        let prior = RootModel::predict(&root, text);
        assert!(prior.label == label("tira") || prior.label == label("amha"));
        let got = hier.predict(text).unwrap();
        assert_eq!(got.label, label("sila"));
        assert!(matches!(got.route, Route::Unit(ref id) if id == "amha-sila-tira"));
    }

    #[test]
    fn non_trigger_predictions_pass_through_unchanged() {
        let corpus = fixture_corpus();
        let root = fixture_root(&corpus);
        let supported = RootModel::supported_labels(&root);
        // Unit only over {tira, sila}: amha predictions pass through.
        let cluster = Cluster::new(
            [label("tira"), label("sila")].into_iter().collect(),
            &supported,
        );
        let unit = train_unit(&cluster, &corpus, &UnitConfig::default()).unwrap();
        let hier = assemble(Root::Pipeline(root.clone()), vec![unit]).unwrap();

        for example in corpus.examples(Granularity::Sentence) {
            let prior = RootModel::predict(&root, &example.text);
            let got = hier.predict(&example.text).unwrap();
            match hier.routing().get(&prior.label) {
                None => {
                    assert_eq!(got.label, prior.label, "pass-through must not change labels");
                    assert_eq!(got.route, Route::RootOnly);
                }
                Some(unit_id) => {
                    // Unit locality: routed outputs stay within the cluster.
                    let unit = &hier.units()[unit_id];
                    assert!(unit.cluster().members.contains(&got.label));
                }
            }
        }
    }

    #[test]
    fn empty_text_passes_through_as_und() {
        let corpus = fixture_corpus();
        let root = fixture_root(&corpus);
        let supported = RootModel::supported_labels(&root);
        let cluster = fixture_cluster(&supported);
        let unit = train_unit(&cluster, &corpus, &UnitConfig::default()).unwrap();
        let hier = assemble(Root::Pipeline(root), vec![unit]).unwrap();
        let got = hier.predict("   ").unwrap();
        assert!(got.label.is_und());
        assert_eq!(got.route, Route::RootOnly);
    }
}
