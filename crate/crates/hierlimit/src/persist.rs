//! Versioned binary container for trained artifacts.
//!
//! Layout: magic `HLIM`, version (u32 LE), manifest length (u64 LE), a
//! UTF-8 JSON manifest describing the artifact and its array blocks, then
//! the blocks themselves as contiguous little-endian f64 arrays
//! (row-major). Serialization is canonical: saving a loaded artifact
//! reproduces the file byte for byte.

use crate::classifier::{NBModel, Pipeline, ReplayTable, Root};
use crate::confusion::Cluster;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureSpace, Projector, Term, TermKind};
use crate::hierarchy::{assemble, HierModel, Unit};
use crate::label::LanguageLabel;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: [u8; 4] = *b"HLIM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone)]
pub enum Artifact {
    FeatureSpace(FeatureSpace),
    Projector(Projector),
    NbModel(NBModel),
    Pipeline(Pipeline),
    Unit(Unit),
    Hier(HierModel),
}

impl Artifact {
    pub fn kind(&self) -> &'static str {
        match self {
            Artifact::FeatureSpace(_) => "feature_space",
            Artifact::Projector(_) => "projector",
            Artifact::NbModel(_) => "nb_model",
            Artifact::Pipeline(_) => "pipeline",
            Artifact::Unit(_) => "unit",
            Artifact::Hier(_) => "hier_model",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SaveOptions {
    /// Embed unit containers inside the hierarchy file instead of writing
    /// them as sibling files referenced by relative path.
    pub embed_units: bool,
}

impl Default for SaveOptions {
    fn default() -> Self {
        SaveOptions { embed_units: false }
    }
}

// ---------------------------------------------------------------------------
// Manifest schema
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockEntry {
    name: String,
    /// Byte offset into the blocks region.
    offset: u64,
    /// Byte length; always a multiple of 8.
    len: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Manifest {
    FeatureSpace {
        space: SpaceManifest,
        blocks: Vec<BlockEntry>,
    },
    Projector {
        projector: ProjectorManifest,
        blocks: Vec<BlockEntry>,
    },
    NbModel {
        model: NbManifest,
        blocks: Vec<BlockEntry>,
    },
    Pipeline {
        pipeline: PipelineManifest,
        blocks: Vec<BlockEntry>,
    },
    Unit {
        unit: UnitManifest,
        blocks: Vec<BlockEntry>,
    },
    HierModel {
        hier: HierManifest,
        blocks: Vec<BlockEntry>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceManifest {
    config: FeatureConfig,
    /// One `c` (char) or `w` (word) per vocabulary entry, in column order.
    term_kinds: String,
    term_texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectorManifest {
    n_features: usize,
    k: usize,
    variance_target: f64,
    total_variance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NbManifest {
    labels: Vec<LanguageLabel>,
    alpha: f64,
    feature_dimension: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineManifest {
    space: SpaceManifest,
    projector: Option<ProjectorManifest>,
    model: NbManifest,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitManifest {
    members: Vec<LanguageLabel>,
    triggers: Vec<LanguageLabel>,
    pipeline: PipelineManifest,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RootManifest {
    Pipeline { pipeline: PipelineManifest },
    Replay {
        rows: BTreeMap<String, String>,
        label_map: BTreeMap<String, LanguageLabel>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum UnitsManifest {
    /// Unit id -> relative path of a sibling unit container.
    Reference { paths: BTreeMap<String, String> },
    Embedded { units: BTreeMap<String, UnitManifest> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HierManifest {
    root: RootManifest,
    routing: BTreeMap<String, String>,
    units: UnitsManifest,
}

// ---------------------------------------------------------------------------
// Block plumbing
// ---------------------------------------------------------------------------

#[derive(Default)]
struct BlockWriter {
    entries: Vec<BlockEntry>,
    data: Vec<u8>,
}

impl BlockWriter {
    fn push(&mut self, name: impl Into<String>, values: &[f64]) {
        let offset = self.data.len() as u64;
        for v in values {
            self.data.extend_from_slice(&v.to_le_bytes());
        }
        self.entries.push(BlockEntry {
            name: name.into(),
            offset,
            len: (values.len() * 8) as u64,
        });
    }
}

struct BlockReader<'a> {
    remaining: BTreeMap<String, (u64, u64)>,
    data: &'a [u8],
}

impl<'a> BlockReader<'a> {
    fn new(entries: &[BlockEntry], data: &'a [u8]) -> Result<Self> {
        let mut cursor = 0u64;
        let mut remaining = BTreeMap::new();
        for entry in entries {
            if entry.offset != cursor {
                return Err(Error::Corrupt(format!(
                    "block {} starts at offset {}, expected {cursor}",
                    entry.name, entry.offset
                )));
            }
            if entry.len % 8 != 0 {
                return Err(Error::Corrupt(format!(
                    "block {} has length {} not divisible by 8",
                    entry.name, entry.len
                )));
            }
            cursor += entry.len;
            if remaining
                .insert(entry.name.clone(), (entry.offset, entry.len))
                .is_some()
            {
                return Err(Error::Corrupt(format!("duplicate block {}", entry.name)));
            }
        }
        if cursor != data.len() as u64 {
            return Err(Error::Corrupt(format!(
                "declared blocks cover {cursor} bytes but the file holds {}",
                data.len()
            )));
        }
        Ok(BlockReader { remaining, data })
    }

    fn take(&mut self, name: &str, expected_values: usize) -> Result<Vec<f64>> {
        let (offset, len) = self
            .remaining
            .remove(name)
            .ok_or_else(|| Error::Corrupt(format!("missing block {name}")))?;
        if len as usize != expected_values * 8 {
            return Err(Error::Corrupt(format!(
                "block {name} holds {} values, expected {expected_values}",
                len / 8
            )));
        }
        let bytes = &self.data[offset as usize..(offset + len) as usize];
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(self) -> Result<()> {
        if let Some(name) = self.remaining.keys().next() {
            return Err(Error::Corrupt(format!("unexpected block {name}")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

fn space_manifest(space: &FeatureSpace) -> SpaceManifest {
    SpaceManifest {
        config: space.config().clone(),
        term_kinds: space
            .vocabulary()
            .iter()
            .map(|t| match t.kind {
                TermKind::Char => 'c',
                TermKind::Word => 'w',
            })
            .collect(),
        term_texts: space.vocabulary().iter().map(|t| t.text.clone()).collect(),
    }
}

fn projector_manifest(p: &Projector, prefix: &str, blocks: &mut BlockWriter) -> ProjectorManifest {
    blocks.push(format!("{prefix}mean"), p.mean());
    blocks.push(format!("{prefix}components"), p.components());
    blocks.push(format!("{prefix}explained_variance"), p.explained_variance());
    blocks.push(format!("{prefix}shift"), p.shift());
    ProjectorManifest {
        n_features: p.n_features(),
        k: p.k(),
        variance_target: p.variance_target(),
        total_variance: p.total_variance(),
    }
}

fn nb_manifest(m: &NBModel, prefix: &str, blocks: &mut BlockWriter) -> NbManifest {
    blocks.push(format!("{prefix}class_log_prior"), m.class_log_prior());
    blocks.push(format!("{prefix}feature_log_prob"), m.feature_log_prob());
    NbManifest {
        labels: m.labels().to_vec(),
        alpha: m.alpha(),
        feature_dimension: m.feature_dimension(),
    }
}

fn pipeline_manifest(p: &Pipeline, prefix: &str, blocks: &mut BlockWriter) -> PipelineManifest {
    PipelineManifest {
        space: space_manifest(p.space()),
        projector: p
            .projector()
            .map(|proj| projector_manifest(proj, &format!("{prefix}projector."), blocks)),
        model: nb_manifest(p.model(), &format!("{prefix}model."), blocks),
    }
}

fn unit_manifest(u: &Unit, prefix: &str, blocks: &mut BlockWriter) -> UnitManifest {
    UnitManifest {
        members: u.cluster().members.iter().cloned().collect(),
        triggers: u.cluster().triggers.iter().cloned().collect(),
        pipeline: pipeline_manifest(u.pipeline(), &format!("{prefix}pipeline."), blocks),
    }
}

fn encode(manifest: &Manifest, blocks: BlockWriter) -> Vec<u8> {
    let manifest_json = serde_json::to_vec(manifest).expect("manifest serialization");
    let mut out = Vec::with_capacity(HEADER_LEN + manifest_json.len() + blocks.data.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    out.extend_from_slice(&blocks.data);
    out
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn unit_file_name(hier_path: &Path, unit_id: &str) -> String {
    let stem = hier_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "hier".to_string());
    format!("{stem}.unit.{unit_id}.hlim")
}

/// Serialize an artifact to `path` atomically (temp file + rename) and
/// return the byte count of the main file. With the default options a
/// hierarchy's units are written as sibling files referenced by relative
/// path; `embed_units` inlines them for single-file distribution.
pub fn save_with(artifact: &Artifact, path: &Path, opts: SaveOptions) -> Result<u64> {
    let mut blocks = BlockWriter::default();
    let manifest = match artifact {
        Artifact::FeatureSpace(space) => Manifest::FeatureSpace {
            space: space_manifest(space),
            blocks: Vec::new(),
        },
        Artifact::Projector(p) => {
            let projector = projector_manifest(p, "", &mut blocks);
            Manifest::Projector {
                projector,
                blocks: Vec::new(),
            }
        }
        Artifact::NbModel(m) => {
            let model = nb_manifest(m, "", &mut blocks);
            Manifest::NbModel {
                model,
                blocks: Vec::new(),
            }
        }
        Artifact::Pipeline(p) => {
            let pipeline = pipeline_manifest(p, "", &mut blocks);
            Manifest::Pipeline {
                pipeline,
                blocks: Vec::new(),
            }
        }
        Artifact::Unit(u) => {
            let unit = unit_manifest(u, "", &mut blocks);
            Manifest::Unit {
                unit,
                blocks: Vec::new(),
            }
        }
        Artifact::Hier(h) => {
            let root = match h.root() {
                Root::Pipeline(p) => RootManifest::Pipeline {
                    pipeline: pipeline_manifest(p, "root.", &mut blocks),
                },
                Root::Replay(t) => RootManifest::Replay {
                    rows: t.rows().clone(),
                    label_map: t.label_map().clone(),
                },
            };
            let units = if opts.embed_units {
                UnitsManifest::Embedded {
                    units: h
                        .units()
                        .iter()
                        .map(|(id, u)| {
                            (id.clone(), unit_manifest(u, &format!("units.{id}."), &mut blocks))
                        })
                        .collect(),
                }
            } else {
                let mut paths = BTreeMap::new();
                for (id, unit) in h.units() {
                    let file_name = unit_file_name(path, id);
                    let unit_path = path.with_file_name(&file_name);
                    save_with(&Artifact::Unit(unit.clone()), &unit_path, opts)?;
                    paths.insert(id.clone(), file_name);
                }
                UnitsManifest::Reference { paths }
            };
            let routing = h
                .routing()
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect();
            Manifest::HierModel {
                hier: HierManifest {
                    root,
                    routing,
                    units,
                },
                blocks: Vec::new(),
            }
        }
    };
    // Install the block directory recorded while encoding.
    let entries = std::mem::take(&mut blocks.entries);
    let manifest = match manifest {
        Manifest::FeatureSpace { space, .. } => Manifest::FeatureSpace {
            space,
            blocks: entries,
        },
        Manifest::Projector { projector, .. } => Manifest::Projector {
            projector,
            blocks: entries,
        },
        Manifest::NbModel { model, .. } => Manifest::NbModel {
            model,
            blocks: entries,
        },
        Manifest::Pipeline { pipeline, .. } => Manifest::Pipeline {
            pipeline,
            blocks: entries,
        },
        Manifest::Unit { unit, .. } => Manifest::Unit {
            unit,
            blocks: entries,
        },
        Manifest::HierModel { hier, .. } => Manifest::HierModel {
            hier,
            blocks: entries,
        },
    };
    let bytes = encode(&manifest, blocks);
    atomic_write(path, &bytes)?;
    Ok(bytes.len() as u64)
}

pub fn save(artifact: &Artifact, path: &Path) -> Result<u64> {
    save_with(artifact, path, SaveOptions::default())
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

fn decode_space(m: SpaceManifest) -> Result<FeatureSpace> {
    if m.term_kinds.chars().count() != m.term_texts.len() {
        return Err(Error::Corrupt(
            "vocabulary kinds and texts disagree in length".into(),
        ));
    }
    let vocabulary: Vec<Term> = m
        .term_kinds
        .chars()
        .zip(m.term_texts)
        .map(|(k, text)| {
            let kind = match k {
                'c' => TermKind::Char,
                'w' => TermKind::Word,
                other => return Err(Error::Corrupt(format!("unknown term kind {other:?}"))),
            };
            Ok(Term { kind, text })
        })
        .collect::<Result<_>>()?;
    FeatureSpace::from_parts(m.config, vocabulary)
}

fn decode_projector(
    m: ProjectorManifest,
    prefix: &str,
    blocks: &mut BlockReader,
) -> Result<Projector> {
    let mean = blocks.take(&format!("{prefix}mean"), m.n_features)?;
    let components = blocks.take(&format!("{prefix}components"), m.k * m.n_features)?;
    let explained_variance = blocks.take(&format!("{prefix}explained_variance"), m.k)?;
    let shift = blocks.take(&format!("{prefix}shift"), m.k)?;
    Projector::from_parts(
        mean,
        components,
        explained_variance,
        m.variance_target,
        shift,
        m.n_features,
        m.total_variance,
    )
}

fn decode_nb(m: NbManifest, prefix: &str, blocks: &mut BlockReader) -> Result<NBModel> {
    let class_log_prior = blocks.take(&format!("{prefix}class_log_prior"), m.labels.len())?;
    let feature_log_prob = blocks.take(
        &format!("{prefix}feature_log_prob"),
        m.labels.len() * m.feature_dimension,
    )?;
    NBModel::from_parts(
        m.labels,
        class_log_prior,
        feature_log_prob,
        m.alpha,
        m.feature_dimension,
    )
}

fn decode_pipeline(
    m: PipelineManifest,
    prefix: &str,
    blocks: &mut BlockReader,
) -> Result<Pipeline> {
    let space = decode_space(m.space)?;
    let projector = m
        .projector
        .map(|p| decode_projector(p, &format!("{prefix}projector."), blocks))
        .transpose()?;
    let model = decode_nb(m.model, &format!("{prefix}model."), blocks)?;
    Pipeline::new(space, projector, model)
}

fn decode_unit(m: UnitManifest, prefix: &str, blocks: &mut BlockReader) -> Result<Unit> {
    let members: BTreeSet<LanguageLabel> = m.members.into_iter().collect();
    let triggers: BTreeSet<LanguageLabel> = m.triggers.into_iter().collect();
    if triggers.is_empty() || !triggers.is_subset(&members) {
        return Err(Error::Corrupt(
            "unit triggers must be a non-empty subset of its members".into(),
        ));
    }
    let id = members
        .iter()
        .map(LanguageLabel::as_str)
        .collect::<Vec<_>>()
        .join("-");
    let cluster = Cluster {
        id,
        members,
        triggers,
    };
    let pipeline = decode_pipeline(m.pipeline, &format!("{prefix}pipeline."), blocks)?;
    Unit::new(cluster, pipeline)
}

/// Load any artifact container.
pub fn load(path: &Path) -> Result<Artifact> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Corrupt(format!(
            "file is {} bytes, smaller than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::UnsupportedVersion { found: version });
    }
    let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let blocks_start = HEADER_LEN.checked_add(manifest_len).ok_or_else(|| {
        Error::Corrupt("manifest length overflows the file size".into())
    })?;
    if blocks_start > bytes.len() {
        return Err(Error::Corrupt(format!(
            "manifest claims {manifest_len} bytes but only {} remain",
            bytes.len() - HEADER_LEN
        )));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..blocks_start])
        .map_err(|e| Error::Corrupt(format!("manifest does not parse: {e}")))?;
    let data = &bytes[blocks_start..];

    let (entries, artifact) = match manifest {
        Manifest::FeatureSpace { space, blocks } => {
            let reader = BlockReader::new(&blocks, data)?;
            let space = decode_space(space)?;
            reader.finish()?;
            return Ok(Artifact::FeatureSpace(space));
        }
        Manifest::Projector { projector, blocks } => {
            let mut reader = BlockReader::new(&blocks, data)?;
            let p = decode_projector(projector, "", &mut reader)?;
            reader.finish()?;
            return Ok(Artifact::Projector(p));
        }
        Manifest::NbModel { model, blocks } => {
            let mut reader = BlockReader::new(&blocks, data)?;
            let m = decode_nb(model, "", &mut reader)?;
            reader.finish()?;
            return Ok(Artifact::NbModel(m));
        }
        Manifest::Pipeline { pipeline, blocks } => {
            let mut reader = BlockReader::new(&blocks, data)?;
            let p = decode_pipeline(pipeline, "", &mut reader)?;
            reader.finish()?;
            return Ok(Artifact::Pipeline(p));
        }
        Manifest::Unit { unit, blocks } => {
            let mut reader = BlockReader::new(&blocks, data)?;
            let u = decode_unit(unit, "", &mut reader)?;
            reader.finish()?;
            return Ok(Artifact::Unit(u));
        }
        Manifest::HierModel { hier, blocks } => (blocks, hier),
    };

    // Hierarchies: decode the root and units, then re-assemble (which
    // re-validates routing invariants).
    let mut reader = BlockReader::new(&entries, data)?;
    let root = match artifact.root {
        RootManifest::Pipeline { pipeline } => {
            Root::Pipeline(decode_pipeline(pipeline, "root.", &mut reader)?)
        }
        RootManifest::Replay { rows, label_map } => {
            Root::Replay(ReplayTable::new(rows, label_map))
        }
    };
    let units: Vec<Unit> = match artifact.units {
        UnitsManifest::Embedded { units } => units
            .into_iter()
            .map(|(id, m)| decode_unit(m, &format!("units.{id}."), &mut reader))
            .collect::<Result<_>>()?,
        UnitsManifest::Reference { paths } => {
            let dir = path.parent().unwrap_or_else(|| Path::new("."));
            paths
                .values()
                .map(|rel| match load(&dir.join(rel))? {
                    Artifact::Unit(u) => Ok(u),
                    other => Err(Error::Corrupt(format!(
                        "referenced file {rel} holds a {} artifact, not a unit",
                        other.kind()
                    ))),
                })
                .collect::<Result<_>>()?
        }
    };
    reader.finish()?;
    let hier = assemble(root, units)?;
    let routing: BTreeMap<String, String> = hier
        .routing()
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect();
    if routing != artifact.routing {
        return Err(Error::Corrupt(
            "stored routing table disagrees with the units' triggers".into(),
        ));
    }
    Ok(Artifact::Hier(hier))
}

pub fn load_pipeline(path: &Path) -> Result<Pipeline> {
    match load(path)? {
        Artifact::Pipeline(p) => Ok(p),
        other => Err(Error::Validation(format!(
            "{} holds a {} artifact, expected a pipeline",
            path.display(),
            other.kind()
        ))),
    }
}

pub fn load_unit(path: &Path) -> Result<Unit> {
    match load(path)? {
        Artifact::Unit(u) => Ok(u),
        other => Err(Error::Validation(format!(
            "{} holds a {} artifact, expected a unit",
            path.display(),
            other.kind()
        ))),
    }
}

pub fn load_hier(path: &Path) -> Result<HierModel> {
    match load(path)? {
        Artifact::Hier(h) => Ok(h),
        other => Err(Error::Validation(format!(
            "{} holds a {} artifact, expected a hierarchical model",
            path.display(),
            other.kind()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{train_pipeline, RootModel, TrainConfig};
    use crate::corpus::{Corpus, Granularity, LabeledExample, Page, Story};
    use crate::features::{fit_ipca, fit_vocab, vectorize, CountVector};
    use crate::hierarchy::{train_unit, UnitConfig};
    use std::collections::BTreeMap;

    fn label(s: &str) -> LanguageLabel {
        LanguageLabel::new(s).unwrap()
    }

    fn sample_pipeline(with_projector: bool) -> Pipeline {
        let mut examples = Vec::new();
        for i in 0..20 {
            examples.push(LabeledExample::new(
                format!("a:{i}"),
                format!("abab baba ab{}", "a".repeat(i % 4 + 1)),
                label("aaa"),
            ));
            examples.push(LabeledExample::new(
                format!("b:{i}"),
                format!("cdcd dcdc cd{}", "c".repeat(i % 3 + 1)),
                label("bbb"),
            ));
        }
        let cfg = TrainConfig {
            features: FeatureConfig::chars(1, 2),
            reduction: with_projector.then(Default::default),
            balance: None,
            balance_pre_projection: false,
            alpha: 1.0,
            allow_unknown_label: false,
        };
        train_pipeline(&examples, &cfg).unwrap()
    }

    #[test]
    fn nb_model_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.hlim");
        let model = sample_pipeline(false).model().clone();
        save(&Artifact::NbModel(model.clone()), &path).unwrap();
        let Artifact::NbModel(back) = load(&path).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(back.labels(), model.labels());
        assert_eq!(back.class_log_prior(), model.class_log_prior());
        assert_eq!(back.feature_log_prob(), model.feature_log_prob());
        assert_eq!(back.alpha(), model.alpha());
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.hlim");
        let p2 = dir.path().join("b.hlim");
        let pipeline = sample_pipeline(true);
        save(&Artifact::Pipeline(pipeline), &p1).unwrap();
        let loaded = load(&p1).unwrap();
        save(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn loaded_pipeline_predicts_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.hlim");
        let pipeline = sample_pipeline(true);
        save(&Artifact::Pipeline(pipeline.clone()), &path).unwrap();
        let back = load_pipeline(&path).unwrap();
        for text in ["abab", "cdcd", "abcd ab", "", "zzz"] {
            assert_eq!(pipeline.predict(text), back.predict(text));
        }
    }

    #[test]
    fn feature_space_and_projector_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let space = fit_vocab(["abab", "cdcd ab"], &FeatureConfig::chars(1, 2)).unwrap();
        let path = dir.path().join("s.hlim");
        save(&Artifact::FeatureSpace(space.clone()), &path).unwrap();
        let Artifact::FeatureSpace(back) = load(&path).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(back.vocabulary(), space.vocabulary());
        assert_eq!(back.config(), space.config());

        let vectors: Vec<CountVector> = ["abab", "cdcd ab", "abcd", "ddcc ab ab"]
            .iter()
            .map(|t| vectorize(&space, t))
            .collect();
        let projector = fit_ipca(&vectors, 0.99, 4).unwrap();
        let path = dir.path().join("proj.hlim");
        save(&Artifact::Projector(projector.clone()), &path).unwrap();
        let Artifact::Projector(back) = load(&path).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(back.mean(), projector.mean());
        assert_eq!(back.components(), projector.components());
        assert_eq!(back.shift(), projector.shift());
        for v in &vectors {
            assert_eq!(back.project(v).unwrap(), projector.project(v).unwrap());
        }
    }

    fn sample_hier() -> HierModel {
        let mk_story = |id: &str, lang: &str, word: &str| Story {
            story_id: id.to_string(),
            language: label(lang),
            pages: (0..4)
                .map(|i| Page {
                    text: format!("{word} {word}{i} {word}. {word} {word}."),
                    page_index: i,
                })
                .collect(),
            metadata: BTreeMap::new(),
        };
        let corpus = Corpus::new(vec![
            mk_story("a0", "amha", "ama"),
            mk_story("t0", "tira", "tiri"),
            mk_story("s0", "sila", "irit"),
        ])
        .unwrap();
        let keep: BTreeSet<LanguageLabel> = [label("amha"), label("tira")].into_iter().collect();
        let root = train_pipeline(
            &corpus.filter_languages(&keep).examples(Granularity::Sentence),
            &TrainConfig {
                features: FeatureConfig::chars(1, 2),
                reduction: None,
                balance: None,
                balance_pre_projection: false,
                alpha: 1.0,
                allow_unknown_label: false,
            },
        )
        .unwrap();
        let supported = RootModel::supported_labels(&root);
        let cluster = Cluster::new(
            [label("amha"), label("tira"), label("sila")].into_iter().collect(),
            &supported,
        );
        let unit = train_unit(&cluster, &corpus, &UnitConfig::default()).unwrap();
        assemble(Root::Pipeline(root), vec![unit]).unwrap()
    }

    #[test]
    fn hier_round_trips_in_both_unit_modes() {
        let dir = tempfile::tempdir().unwrap();
        let hier = sample_hier();
        let texts = ["ama ama.", "tiri tiri.", "irit irit.", ""];

        for embed in [false, true] {
            let path = dir.path().join(format!("h-{embed}.hlim"));
            save_with(&Artifact::Hier(hier.clone()), &path, SaveOptions { embed_units: embed })
                .unwrap();
            let back = load_hier(&path).unwrap();
            for text in texts {
                assert_eq!(
                    hier.predict(text).unwrap(),
                    back.predict(text).unwrap(),
                    "embed={embed} text={text:?}"
                );
            }
        }
        // Reference mode wrote a sibling unit file.
        assert!(dir
            .path()
            .join("h-false.unit.amha-sila-tira.hlim")
            .exists());
    }

    #[test]
    fn replay_rooted_hier_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let rows: BTreeMap<String, String> =
            [("x:0:0".to_string(), "am".to_string())].into_iter().collect();
        let map: BTreeMap<String, LanguageLabel> =
            [("am".to_string(), label("amha"))].into_iter().collect();
        let hier = assemble(Root::Replay(ReplayTable::new(rows, map)), Vec::new()).unwrap();
        let path = dir.path().join("r.hlim");
        save(&Artifact::Hier(hier), &path).unwrap();
        let back = load_hier(&path).unwrap();
        let ex = LabeledExample::new("x:0:0", "whatever", label("amha"));
        assert_eq!(back.predict_example(&ex).unwrap().label, label("amha"));
    }

    #[test]
    fn flipping_any_header_byte_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.hlim");
        save(&Artifact::Pipeline(sample_pipeline(false)), &path).unwrap();
        let original = fs::read(&path).unwrap();
        for i in 0..HEADER_LEN {
            let mut corrupted = original.clone();
            corrupted[i] ^= 0xFF;
            let bad = dir.path().join("bad.hlim");
            fs::write(&bad, &corrupted).unwrap();
            let err = load(&bad).expect_err(&format!("byte {i} flip went unnoticed"));
            match i {
                0..=3 => assert!(matches!(err, Error::BadMagic { .. }), "byte {i}: {err}"),
                4..=7 => {
                    assert!(matches!(err, Error::UnsupportedVersion { .. }), "byte {i}: {err}")
                }
                _ => assert!(matches!(err, Error::Corrupt(_)), "byte {i}: {err}"),
            }
        }
    }

    #[test]
    fn version_99_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.hlim");
        save(&Artifact::Pipeline(sample_pipeline(false)), &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load(&path),
            Err(Error::UnsupportedVersion { found: 99 })
        ));
    }

    #[test]
    fn truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.hlim");
        save(&Artifact::Pipeline(sample_pipeline(false)), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        for cut in [3, HEADER_LEN - 1, HEADER_LEN + 5, bytes.len() - 9] {
            fs::write(&path, &bytes[..cut]).unwrap();
            assert!(load(&path).is_err(), "cut at {cut} loaded");
        }
    }

    #[test]
    fn empty_manifest_is_a_structured_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.hlim");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MAGIC);
        bytes.extend_from_slice(&VERSION.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load(&path), Err(Error::Corrupt(_))));
    }

    #[test]
    fn little_endian_layout_is_pinned() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("le.hlim");
        save(&Artifact::Pipeline(sample_pipeline(false)), &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"HLIM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let manifest_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let manifest: serde_json::Value =
            serde_json::from_slice(&bytes[16..16 + manifest_len]).unwrap();
        assert_eq!(manifest["kind"], "pipeline");
    }
}
