use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::keywords::{metadata_proximities, KeywordTable, ProximityScore};
use super::patterns::PatternTable;
use crate::retrieval::{match_texts, CollectionProfile, RetrievalError, Session, TypeIndicator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMethod {
    InPlace,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternCount {
    pub pattern: String,
    pub attribute: String,
    pub count: u64,
    pub references: Vec<String>,
    pub method: MatchMethod,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSummary {
    /// Total per pattern id, including zeros.
    pub per_pattern: BTreeMap<String, u64>,
    /// Non-zero counts per (pattern, attribute).
    pub counts: Vec<PatternCount>,
    pub data_matches: u64,
    /// Entities the counts cover: the sample size, or n when every count ran in place.
    pub entities_examined: u64,
    pub diagnostics: Vec<String>,
}

/// Matches every textual attribute against every pattern. Counts are per entity.
///
/// When the sample does not cover the collection and the session can evaluate
/// patterns in place, the storage engine counts instead; patterns it cannot
/// run fall back to the sample and the fallback is recorded.
pub fn data_matches(
    profile: &CollectionProfile,
    patterns: &PatternTable,
    mut session: Option<&mut dyn Session>,
    reference_cap: usize,
) -> MatchSummary {
    let in_place = profile.is_partial() && session.as_ref().is_some_and(|s| s.capabilities().in_place_regex);
    let mut summary = MatchSummary::default();
    let mut diagnostics = BTreeSet::new();
    let mut all_in_place = in_place;

    for pattern in patterns.patterns() {
        let mut total = 0u64;
        let mut budget = reference_cap;
        for attribute in profile.attributes.iter().filter(|a| a.is_textual()) {
            let engine_result = match (&mut session, in_place) {
                (Some(s), true) => Some(s.count_matches(&profile.collection, &attribute.name, pattern, budget)),
                _ => None,
            };
            let (count, references, method) = match engine_result {
                Some(Ok(m)) => (m.count, m.references, MatchMethod::InPlace),
                other => {
                    if let Some(Err(e)) = other {
                        all_in_place = false;
                        diagnostics.insert(fallback_note(pattern.id(), &e));
                    }
                    let mut count = 0u64;
                    let mut references = Vec::new();
                    for entity in &profile.sample {
                        let hit = entity
                            .values
                            .get(&attribute.name)
                            .is_some_and(|v| match_texts(v).into_iter().any(|t| pattern.is_match(t)));
                        if hit {
                            count += 1;
                            if references.len() < budget {
                                references.push(entity.reference.clone());
                            }
                        }
                    }
                    (count, references, MatchMethod::Sample)
                }
            };
            let mut references = references;
            references.truncate(budget);
            budget -= references.len();
            total += count;
            if count > 0 {
                summary.counts.push(PatternCount {
                    pattern: pattern.id().to_string(),
                    attribute: attribute.name.clone(),
                    count,
                    references,
                    method,
                });
            }
        }
        summary.per_pattern.insert(pattern.id().to_string(), total);
        summary.data_matches += total;
    }
    summary.entities_examined = if all_in_place { profile.entity_count } else { profile.sample.len() as u64 };
    summary.diagnostics = diagnostics.into_iter().collect();
    summary
}

fn fallback_note(pattern: &str, e: &RetrievalError) -> String {
    format!("pattern '{pattern}': in-place matching unavailable ({e}); matched against the sample instead")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectionRef {
    pub storage_id: String,
    pub collection: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorEvidence {
    pub attribute: String,
    pub indicator: TypeIndicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub proximities: Vec<ProximityScore>,
    pub matches: MatchSummary,
    pub type_indicators: Vec<IndicatorEvidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub collection: CollectionRef,
    pub n: u64,
    pub data_matches: u64,
    pub alpha: u8,
    pub beta: f64,
    pub t: f64,
    pub personal: bool,
    pub evidence: Evidence,
}

/// `min(1,n) · max(α, β/100)`.
pub fn t_metric(n: u64, alpha: u8, beta: f64) -> f64 {
    n.min(1) as f64 * f64::max(f64::from(alpha), beta / 100.0)
}

/// Mean of retained similarities, 0 without any. Clamped to the observed
/// range so rounding never pushes a mean of scores ≥ 60 below 60.
pub fn mean_proximity(scores: &[ProximityScore]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let (min, max, sum) = scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY, 0.0), |(lo, hi, s), p| {
        (lo.min(p.similarity), hi.max(p.similarity), s + p.similarity)
    });
    (sum / scores.len() as f64).clamp(min, max)
}

pub fn classify(
    collection: CollectionRef,
    n: u64,
    proximities: Vec<ProximityScore>,
    matches: MatchSummary,
    type_indicators: Vec<IndicatorEvidence>,
) -> ClassificationResult {
    let alpha = u8::from(matches.data_matches > 0);
    let beta = mean_proximity(&proximities);
    let t = t_metric(n, alpha, beta);
    ClassificationResult {
        collection,
        n,
        data_matches: matches.data_matches,
        alpha,
        beta,
        t,
        personal: t > 0.0,
        evidence: Evidence {
            proximities,
            matches,
            type_indicators,
        },
    }
}

/// Metadata proximity, data matching and classification of one profile.
pub fn analyze_profile(
    storage_id: &str,
    profile: &CollectionProfile,
    keywords: &KeywordTable,
    patterns: &PatternTable,
    session: Option<&mut dyn Session>,
    reference_cap: usize,
) -> ClassificationResult {
    let proximities = metadata_proximities(&profile.attributes, keywords);
    let matches = data_matches(profile, patterns, session, reference_cap);
    let indicators = profile
        .attributes
        .iter()
        .filter_map(|a| {
            a.type_indicator.map(|indicator| IndicatorEvidence {
                attribute: a.name.clone(),
                indicator,
            })
        })
        .collect();
    classify(
        CollectionRef {
            storage_id: storage_id.to_string(),
            collection: profile.collection.clone(),
        },
        profile.entity_count,
        proximities,
        matches,
        indicators,
    )
}
