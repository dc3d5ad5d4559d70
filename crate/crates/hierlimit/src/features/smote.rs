//! Synthetic minority oversampling: interpolate new points between a
//! sample and one of its nearest same-class neighbors.

use crate::error::{Error, Result};
use crate::label::LanguageLabel;
use crate::util::derive_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;

/// Per-class target size for oversampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetCount {
    Count(usize),
    /// Raise every class to the size of the largest one.
    MatchMajority,
}

impl Serialize for TargetCount {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TargetCount::Count(n) => serializer.serialize_u64(*n as u64),
            TargetCount::MatchMajority => serializer.serialize_str("match-majority"),
        }
    }
}

impl<'de> Deserialize<'de> for TargetCount {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct TargetVisitor;
        impl<'de> Visitor<'de> for TargetVisitor {
            type Value = TargetCount;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive integer or the string \"match-majority\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                Ok(TargetCount::Count(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                if v < 0 {
                    return Err(E::custom("target count must be nonnegative"));
                }
                Ok(TargetCount::Count(v as usize))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                if v == "match-majority" {
                    Ok(TargetCount::MatchMajority)
                } else {
                    Err(E::custom(format!(
                        "unknown target count {v:?}; expected \"match-majority\""
                    )))
                }
            }
        }
        deserializer.deserialize_any(TargetVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceConfig {
    pub k_neighbors: usize,
    pub target_count: TargetCount,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig {
            k_neighbors: 5,
            target_count: TargetCount::MatchMajority,
            seed: 0,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 1 {
            return Err(Error::Validation("k_neighbors must be >= 1".into()));
        }
        Ok(())
    }
}

/// Indices of the k nearest neighbors of each sample (excluding itself),
/// by Euclidean distance, ties broken by index.
fn nearest_neighbors(samples: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    let n = samples.len();
    (0..n)
        .map(|i| {
            let mut dist: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2 = samples[i]
                        .iter()
                        .zip(&samples[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>();
                    (d2, j)
                })
                .collect();
            dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
            dist.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Oversample one class to `cfg.target_count` by SMOTE interpolation.
///
/// Returns the real samples followed by the synthetic ones. Each synthetic
/// point is `s + u * (n - s)` for a random real sample `s`, one of its k
/// nearest neighbors `n`, and `u` uniform in [0, 1]. With fewer samples
/// than `k_neighbors + 1`, k is reduced to `len - 1`.
pub fn smote(samples: &[Vec<f64>], cfg: &BalanceConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let target = match cfg.target_count {
        TargetCount::Count(t) => t,
        TargetCount::MatchMajority => {
            return Err(Error::Validation(
                "match-majority must be resolved against the full class map; use oversample()"
                    .into(),
            ))
        }
    };
    smote_to(samples, target, cfg.k_neighbors, cfg.seed)
}

fn smote_to(
    samples: &[Vec<f64>],
    target: usize,
    k_neighbors: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if samples.len() < 2 {
        return Err(Error::Validation(format!(
            "cannot interpolate from {} sample(s); need at least 2",
            samples.len()
        )));
    }
    let dim = samples[0].len();
    if samples.iter().any(|s| s.len() != dim) {
        return Err(Error::Validation("samples disagree on dimension".into()));
    }
    if target <= samples.len() {
        return Ok(samples.to_vec());
    }

    let k = k_neighbors.min(samples.len() - 1);
    let neighbors = nearest_neighbors(samples, k);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = samples.to_vec();
    for _ in 0..target - samples.len() {
        let s = rng.random_range(0..samples.len());
        let n = neighbors[s][rng.random_range(0..k)];
        let u: f64 = rng.random();
        let point = samples[s]
            .iter()
            .zip(&samples[n])
            .map(|(a, b)| a + u * (b - a))
            .collect();
        out.push(point);
    }
    Ok(out)
}

/// Oversample every class toward the configured target. With
/// `MatchMajority` the target is the size of the largest class. Each class
/// draws from its own seed stream, so the output is independent of class
/// iteration order.
pub fn oversample(
    classes: &BTreeMap<LanguageLabel, Vec<Vec<f64>>>,
    cfg: &BalanceConfig,
) -> Result<BTreeMap<LanguageLabel, Vec<Vec<f64>>>> {
    cfg.validate()?;
    if classes.is_empty() {
        return Err(Error::Validation("oversample requires at least one class".into()));
    }
    let target = match cfg.target_count {
        TargetCount::Count(t) => t,
        TargetCount::MatchMajority => classes.values().map(Vec::len).max().unwrap_or(0),
    };
    let mut out = BTreeMap::new();
    for (label, samples) in classes {
        let balanced = if samples.len() >= target {
            samples.clone()
        } else {
            smote_to(
                samples,
                target,
                cfg.k_neighbors,
                derive_seed(cfg.seed, &format!("smote:{label}")),
            )?
        };
        out.insert(label.clone(), balanced);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(target: TargetCount, seed: u64) -> BalanceConfig {
        BalanceConfig {
            k_neighbors: 5,
            target_count: target,
            seed,
        }
    }

    #[test]
    fn synthesizes_on_the_segment_between_two_points() {
        let samples = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let out = smote(&samples, &cfg(TargetCount::Count(3), 7)).unwrap();
        assert_eq!(out.len(), 3);
        let synth = &out[2];
        assert!((synth[0] - synth[1]).abs() < 1e-12, "must stay on y = x");
        assert!((0.0..=1.0).contains(&synth[0]));
    }

    #[test]
    fn target_equal_to_input_is_identity() {
        let samples = vec![vec![0.0], vec![2.0], vec![5.0]];
        let out = smote(&samples, &cfg(TargetCount::Count(3), 1)).unwrap();
        assert_eq!(out, samples);
    }

    #[test]
    fn fewer_than_two_samples_is_an_error() {
        let samples = vec![vec![1.0, 2.0]];
        assert!(smote(&samples, &cfg(TargetCount::Count(5), 0)).is_err());
    }

    #[test]
    fn deterministic_for_a_fixed_seed() {
        let samples: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let a = smote(&samples, &cfg(TargetCount::Count(20), 99)).unwrap();
        let b = smote(&samples, &cfg(TargetCount::Count(20), 99)).unwrap();
        assert_eq!(a, b);
        let c = smote(&samples, &cfg(TargetCount::Count(20), 100)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_points_stay_in_the_bounding_box() {
        let samples: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![(i % 3) as f64, (i % 5) as f64 - 2.0, (i * 7 % 11) as f64])
            .collect();
        let mut lo = samples[0].clone();
        let mut hi = samples[0].clone();
        for s in &samples {
            for d in 0..s.len() {
                lo[d] = lo[d].min(s[d]);
                hi[d] = hi[d].max(s[d]);
            }
        }
        for seed in 0..1000u64 {
            let out = smote(&samples, &cfg(TargetCount::Count(12), seed)).unwrap();
            for synth in &out[samples.len()..] {
                for d in 0..synth.len() {
                    assert!(synth[d] >= lo[d] - 1e-12 && synth[d] <= hi[d] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn k_is_reduced_for_tiny_classes() {
        // 3 samples with k_neighbors 5: k must silently become 2.
        let samples = vec![vec![0.0], vec![1.0], vec![10.0]];
        let out = smote(
            &samples,
            &BalanceConfig {
                k_neighbors: 5,
                target_count: TargetCount::Count(30),
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(out.len(), 30);
        for synth in &out[3..] {
            assert!((0.0..=10.0).contains(&synth[0]));
        }
    }

    #[test]
    fn oversample_matches_majority() {
        let a = LanguageLabel::new("aaa").unwrap();
        let b = LanguageLabel::new("bbb").unwrap();
        let mut classes = BTreeMap::new();
        classes.insert(a.clone(), vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        classes.insert(b.clone(), vec![vec![10.0], vec![11.0]]);
        let out = oversample(&classes, &cfg(TargetCount::MatchMajority, 5)).unwrap();
        assert_eq!(out[&a].len(), 4);
        assert_eq!(out[&b].len(), 4);
        // Minority synthetics interpolate minority points only.
        for synth in &out[&b][2..] {
            assert!((10.0..=11.0).contains(&synth[0]));
        }
    }

    #[test]
    fn smote_rejects_unresolved_match_majority() {
        let samples = vec![vec![0.0], vec![1.0]];
        assert!(smote(&samples, &cfg(TargetCount::MatchMajority, 0)).is_err());
    }

    #[test]
    fn target_count_serde_forms() {
        let c: TargetCount = serde_json::from_str("17").unwrap();
        assert_eq!(c, TargetCount::Count(17));
        let m: TargetCount = serde_json::from_str("\"match-majority\"").unwrap();
        assert_eq!(m, TargetCount::MatchMajority);
        assert!(serde_json::from_str::<TargetCount>("\"other\"").is_err());
        assert_eq!(serde_json::to_string(&m).unwrap(), "\"match-majority\"");
    }
}
