use hierlimit::classifier::{train_pipeline, RootModel, Root};
use hierlimit::confusion::{compute_confusion, find_clusters, hit_ratios};
use hierlimit::corpus::Granularity;
use hierlimit::hierarchy::{train_unit, UnitConfig};
use hierlimit::persist::{save, Artifact};
use hierlimit::synth;
use std::time::Instant;

fn main() {
    let cfg = synth::SynthConfig { seed: 42, ..Default::default() };
    let fixture = synth::generate(&cfg);
    let root_corpus = fixture.train.filter_languages(&fixture.root_languages());
    let examples = root_corpus.examples(Granularity::Page);
    println!("root docs: {}", examples.len());
    let t0 = Instant::now();
    let root = train_pipeline(&examples, &synth::coarse_root_train_config(42)).unwrap();
    println!("root train: {:.3}s", t0.elapsed().as_secs_f64());
    println!("root vocab n = {}", root.space().n_features());
    let proj = root.projector().unwrap();
    println!("root k = {}, evr sum = {:.4}", proj.k(),
        proj.explained_variance_ratio().iter().sum::<f64>());
    let dir = tempfile::tempdir().unwrap();
    let bytes = save(&Artifact::Pipeline(root.clone()), &dir.path().join("r.hlim")).unwrap();
    println!("root bytes = {bytes}");

    let dev = fixture.dev.examples(Granularity::Sentence);
    let report = compute_confusion(&Root::Pipeline(root.clone()), &dev).unwrap();
    let ratios = hit_ratios(&report);
    let finding = find_clusters(&ratios, 0.7, &RootModel::supported_labels(&root)).unwrap();
    for c in &finding.clusters { println!("cluster {}", c.id); }
    let ucfg = UnitConfig { seed: 42, ..Default::default() };
    for c in &finding.clusters {
        let t0 = Instant::now();
        let unit = train_unit(c, &fixture.train, &ucfg).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let b = save(&Artifact::Unit(unit.clone()), &dir.path().join("u.hlim")).unwrap();
        println!("unit {}: vocab={} bytes={} secs={:.3}", c.id,
            unit.pipeline().space().n_features(), b, secs);
    }
}
