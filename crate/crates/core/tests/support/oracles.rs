//! Independent reference computations for the classification laws.
//! Shared by the analysis property tests and the acceptance harness.

#![allow(dead_code)]

use rand::Rng;
use teiresias_core::analysis::{
    classify, similarity, t_metric, CollectionRef, MatchSummary, ProximityBasis, ProximityScore,
};

/// Textbook full-matrix edit distance over chars.
pub fn brute_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = *[d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost].iter().min().unwrap();
        }
    }
    d[a.len()][b.len()]
}

fn reference_ratio(a: &str, b: &str) -> f64 {
    let m = a.chars().count().max(b.chars().count());
    if m == 0 {
        return 0.0;
    }
    (100 * (m - brute_levenshtein(a, b))) as f64 / m as f64
}

/// Best ratio over the whole name and its `_`-separated parts. Valid for the
/// lowercase-and-underscore names [`random_pair`] produces, where no case
/// boundaries exist.
pub fn reference_similarity(attribute: &str, keyword: &str) -> f64 {
    if attribute.is_empty() || keyword.is_empty() {
        return 0.0;
    }
    attribute
        .split('_')
        .filter(|t| !t.is_empty())
        .map(|t| reference_ratio(t, keyword))
        .fold(reference_ratio(attribute, keyword), f64::max)
}

fn random_word(rng: &mut impl Rng, alphabet: &[u8], max: usize) -> String {
    let len = rng.gen_range(1..=max);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())] as char).collect()
}

/// A small alphabet keeps many pairs near the 60 threshold.
pub fn random_pair(rng: &mut impl Rng) -> (String, String) {
    let attribute = random_word(rng, b"abcde_", 14);
    let keyword = random_word(rng, b"abcde", 9);
    (attribute, keyword)
}

pub const SIMILARITY_FIXTURES: [(&str, &str, &str); 3] =
    [("email", "email", "= 100"), ("user_name", "name", "= 100"), ("id", "address", "< 60")];

pub fn check_similarity(attribute: &str, keyword: &str) -> Result<(), String> {
    let got = similarity(attribute, keyword);
    let want = reference_similarity(attribute, keyword);
    if got.to_bits() != want.to_bits() {
        return Err(format!("similarity({attribute:?}, {keyword:?}) = {got}, reference {want}"));
    }
    Ok(())
}

pub fn check_similarity_fixtures() -> Result<(), String> {
    for (a, k, expect) in SIMILARITY_FIXTURES {
        check_similarity(a, k)?;
        let s = similarity(a, k);
        let holds = match expect {
            "= 100" => s == 100.0,
            _ => s < 60.0,
        };
        if !holds {
            return Err(format!("similarity({a:?}, {k:?}) = {s}, expected {expect}"));
        }
    }
    Ok(())
}

/// One randomized classification input.
#[derive(Debug, Clone)]
pub struct TCase {
    pub n: u64,
    pub matches: u64,
    pub proximities: Vec<f64>,
}

/// Proximities look like real ratios `100(m-d)/m` at or above the threshold,
/// with an occasional arbitrary value in [60, 100].
pub fn random_t_case(rng: &mut impl Rng) -> TCase {
    let n = if rng.gen_bool(0.3) { 0 } else { rng.gen_range(1..=1_000_000_000) };
    let matches = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(1..=1_000_000) };
    let k = rng.gen_range(0..=8);
    let proximities = (0..k)
        .map(|_| {
            if rng.gen_bool(0.2) {
                rng.gen_range(60.0..=100.0)
            } else {
                let m: usize = rng.gen_range(1..=20);
                let d = rng.gen_range(0..=(2 * m) / 5);
                (100 * (m - d)) as f64 / m as f64
            }
        })
        .collect();
    TCase { n, matches, proximities }
}

fn scores(values: &[f64]) -> Vec<ProximityScore> {
    values
        .iter()
        .enumerate()
        .map(|(i, s)| ProximityScore {
            attribute: format!("a{i}"),
            keyword: "k".into(),
            similarity: *s,
            basis: ProximityBasis::Name,
        })
        .collect()
}

/// Range law, annihilation at n = 0, match dominance and bit-exact recomputation.
pub fn check_t_case(case: &TCase) -> Result<(), String> {
    let run = || {
        classify(
            CollectionRef {
                storage_id: "s".into(),
                collection: "c".into(),
            },
            case.n,
            scores(&case.proximities),
            MatchSummary {
                data_matches: case.matches,
                ..MatchSummary::default()
            },
            Vec::new(),
        )
    };
    let r = run();
    let t = r.t;
    if !(t == 0.0 || (0.6..=1.0).contains(&t)) {
        return Err(format!("{case:?}: T = {t} outside {{0}} ∪ [0.6, 1]"));
    }
    if case.n == 0 && t != 0.0 {
        return Err(format!("{case:?}: T = {t} for an empty collection"));
    }
    if case.n >= 1 && case.matches >= 1 && r.beta <= 100.0 && t != 1.0 {
        return Err(format!("{case:?}: T = {t} despite data matches"));
    }
    if r.personal != (t > 0.0) {
        return Err(format!("{case:?}: verdict {} disagrees with T = {t}", r.personal));
    }
    if t_metric(r.n, r.alpha, r.beta).to_bits() != t.to_bits() || run().t.to_bits() != t.to_bits() {
        return Err(format!("{case:?}: recomputation differs from T = {t}"));
    }
    // Independent formula.
    let beta = if case.proximities.is_empty() {
        0.0
    } else {
        let lo = case.proximities.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = case.proximities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (case.proximities.iter().sum::<f64>() / case.proximities.len() as f64).clamp(lo, hi)
    };
    let alpha = if case.matches > 0 { 1.0 } else { 0.0 };
    let expected = if case.n == 0 { 0.0 } else { f64::max(alpha, beta / 100.0) };
    if expected.to_bits() != t.to_bits() {
        return Err(format!("{case:?}: T = {t}, formula gives {expected}"));
    }
    Ok(())
}
