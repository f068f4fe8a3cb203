//! Personal-data classification of collections: metadata proximity of attribute
//! names to keywords, pattern matching over values, and the T score combining both.

mod classify;
mod keywords;
mod patterns;
pub mod similarity;

pub use classify::{
    analyze_profile, classify, data_matches, mean_proximity, t_metric, ClassificationResult, CollectionRef,
    Evidence, IndicatorEvidence, MatchMethod, MatchSummary, PatternCount,
};
pub use keywords::{
    metadata_proximities, KeywordError, KeywordTable, ProximityBasis, ProximityScore, DEFAULT_KEYWORDS_YAML,
};
pub use patterns::{
    check_portable, luhn_valid, CompiledPattern, Dialect, Fixtures, PatternDef, PatternError, PatternTable,
    Validator, DEFAULT_PATTERNS_YAML,
};
pub use similarity::{similarity, PROXIMITY_THRESHOLD};
