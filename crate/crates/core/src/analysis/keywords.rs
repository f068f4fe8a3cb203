use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::similarity::{similarity, PROXIMITY_THRESHOLD};
use crate::retrieval::AttributeMeta;

pub const DEFAULT_KEYWORDS_YAML: &str = include_str!("../defaults/keywords.yaml");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KeywordError {
    #[error("keyword table is empty")]
    Empty,
    #[error("keyword {0:?} must be lowercase and trimmed")]
    NotNormalized(String),
    #[error("keyword {0:?} is listed twice")]
    Duplicate(String),
    #[error("cannot parse keyword table: {0}")]
    Parse(String),
}

/// Keywords in priority order: on equal similarity the earlier entry wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KeywordTable {
    keywords: Vec<String>,
}

impl KeywordTable {
    pub fn new(keywords: Vec<String>) -> Result<Self, KeywordError> {
        if keywords.is_empty() {
            return Err(KeywordError::Empty);
        }
        let mut seen = BTreeSet::new();
        for k in &keywords {
            if k.is_empty() || k.trim() != k || k.to_lowercase() != *k {
                return Err(KeywordError::NotNormalized(k.clone()));
            }
            if !seen.insert(k.as_str()) {
                return Err(KeywordError::Duplicate(k.clone()));
            }
        }
        Ok(Self { keywords })
    }

    pub fn from_yaml(text: &str) -> Result<Self, KeywordError> {
        #[derive(Deserialize)]
        struct File {
            keywords: Vec<String>,
        }
        let file: File = serde_yaml::from_str(text).map_err(|e| KeywordError::Parse(e.to_string()))?;
        Self::new(file.keywords)
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }
}

impl Default for KeywordTable {
    fn default() -> Self {
        Self::from_yaml(DEFAULT_KEYWORDS_YAML).expect("shipped keyword table is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProximityBasis {
    Name,
    TypeIndicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProximityScore {
    pub attribute: String,
    pub keyword: String,
    pub similarity: f64,
    pub basis: ProximityBasis,
}

/// Best keyword per attribute, keeping only scores at or above the threshold.
/// Attributes with a type indicator score 100 against the indicator's keyword.
/// Sorted by similarity descending, then attribute name.
pub fn metadata_proximities(attributes: &[AttributeMeta], table: &KeywordTable) -> Vec<ProximityScore> {
    let mut scores: Vec<ProximityScore> = attributes
        .iter()
        .filter_map(|attr| {
            if let Some(indicator) = attr.type_indicator {
                return Some(ProximityScore {
                    attribute: attr.name.clone(),
                    keyword: indicator.keyword().to_string(),
                    similarity: 100.0,
                    basis: ProximityBasis::TypeIndicator,
                });
            }
            let mut best: Option<(&String, f64)> = None;
            for keyword in table.keywords() {
                let s = similarity(&attr.name, keyword);
                if best.map_or(true, |(_, b)| s > b) {
                    best = Some((keyword, s));
                }
            }
            best.filter(|(_, s)| *s >= PROXIMITY_THRESHOLD)
                .map(|(keyword, s)| ProximityScore {
                    attribute: attr.name.clone(),
                    keyword: keyword.clone(),
                    similarity: s,
                    basis: ProximityBasis::Name,
                })
        })
        .collect();
    scores.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.attribute.cmp(&b.attribute))
    });
    scores
}
