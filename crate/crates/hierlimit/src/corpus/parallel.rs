//! Parallel-segment extraction from multilingual pages.
//!
//! Segments similar to a reference sentence anchor the high-resource side;
//! the untagged runs between anchors are the low-resource translations and
//! get paired with the nearest anchor's reference.

use crate::corpus::segment::sentence_spans;
use crate::corpus::MultilingualDoc;
use std::collections::BTreeSet;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Default)]
pub struct ExtractOutcome {
    /// (low-resource segment, matched reference sentence), in page order.
    pub pairs: Vec<(String, String)>,
    pub diagnostics: Vec<String>,
}

fn trigram_set(text: &str) -> BTreeSet<String> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    let chars: Vec<char> = normalized.chars().collect();
    if chars.is_empty() {
        return BTreeSet::new();
    }
    if chars.len() < 3 {
        return [normalized].into_iter().collect();
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    intersection as f64 / union as f64
}

/// Extract (low-resource, reference) sentence pairs from a multilingual
/// document.
///
/// Each page is sentence-segmented; segments whose character-trigram
/// Jaccard similarity to some reference sentence reaches the threshold are
/// anchors for the high-resource side, and each maximal run of untagged
/// segments is paired with the nearest anchor's reference (the preceding
/// anchor on ties). Pages without anchors contribute diagnostics, not
/// failures.
pub fn extract_parallel(
    doc: &MultilingualDoc,
    reference_sentences: &[String],
    similarity_threshold: f64,
) -> ExtractOutcome {
    let mut outcome = ExtractOutcome::default();
    if reference_sentences.is_empty() {
        outcome
            .diagnostics
            .push(format!("document {}: empty reference list", doc.story_id));
        return outcome;
    }
    let reference_trigrams: Vec<BTreeSet<String>> =
        reference_sentences.iter().map(|s| trigram_set(s)).collect();

    let mut any_anchor = false;
    for page in &doc.pages {
        let spans = sentence_spans(&page.text);
        if spans.is_empty() {
            continue;
        }
        // anchor[i] = Some(reference index) when segment i matched.
        let anchors: Vec<Option<usize>> = spans
            .iter()
            .map(|&(s, e)| {
                let grams = trigram_set(&page.text[s..e]);
                let mut best: Option<(f64, usize)> = None;
                for (ri, ref_grams) in reference_trigrams.iter().enumerate() {
                    let sim = jaccard(&grams, ref_grams);
                    if best.map_or(true, |(bs, _)| sim > bs) {
                        best = Some((sim, ri));
                    }
                }
                best.filter(|&(sim, _)| sim >= similarity_threshold)
                    .map(|(_, ri)| ri)
            })
            .collect();

        if anchors.iter().all(Option::is_none) {
            outcome.diagnostics.push(format!(
                "document {} page {}: no segment matched any reference",
                doc.story_id, page.page_index
            ));
            continue;
        }
        any_anchor = true;

        let mut i = 0;
        while i < spans.len() {
            if anchors[i].is_some() {
                i += 1;
                continue;
            }
            let mut j = i;
            while j + 1 < spans.len() && anchors[j + 1].is_none() {
                j += 1;
            }
            // Nearest anchor: preceding at distance from the run start,
            // following at distance from the run end; preceding wins ties.
            let preceding = (0..i).rev().find(|&p| anchors[p].is_some());
            let following = (j + 1..spans.len()).find(|&f| anchors[f].is_some());
            let reference = match (preceding, following) {
                (Some(p), Some(f)) => {
                    if i - p <= f - j {
                        anchors[p]
                    } else {
                        anchors[f]
                    }
                }
                (Some(p), None) => anchors[p],
                (None, Some(f)) => anchors[f],
                (None, None) => unreachable!("page has at least one anchor"),
            }
            .expect("anchor indices point at matches");

            let segment = page.text[spans[i].0..spans[j].1].trim().to_string();
            outcome
                .pairs
                .push((segment, reference_sentences[reference].clone()));
            i = j + 1;
        }
    }

    if !any_anchor {
        outcome.diagnostics.push(format!(
            "document {}: no segment matched any reference sentence",
            doc.story_id
        ));
    }
    outcome
}
