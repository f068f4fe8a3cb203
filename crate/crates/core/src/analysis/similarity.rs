//! Length-normalized Levenshtein proximity between attribute names and keywords.

/// Retained proximities are at least this similar (0–100 scale). Not configurable:
/// the T metric's range relies on it.
pub const PROXIMITY_THRESHOLD: f64 = 60.0;

pub fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Splits an attribute name on `_`, `-`, `.`, whitespace and camel-case
/// boundaries (`userName` → `user`, `name`; `HTTPServer` → `http`, `server`).
/// Tokens are lowercased; empty tokens are dropped.
pub fn tokenize(name: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for part in name.trim().split(|c: char| c == '_' || c == '-' || c == '.' || c.is_whitespace()) {
        let chars: Vec<char> = part.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let lower_to_upper = !prev.is_uppercase() && prev.is_alphanumeric() && cur.is_uppercase();
            let acronym_end = prev.is_uppercase()
                && cur.is_uppercase()
                && chars.get(i + 1).is_some_and(|n| n.is_lowercase());
            if lower_to_upper || acronym_end {
                tokens.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        if start < chars.len() {
            tokens.push(chars[start..].iter().collect::<String>().to_lowercase());
        }
    }
    tokens.retain(|t| !t.is_empty());
    tokens
}

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `100 · (1 − d / max(|a|,|b|))`, computed as `100·(m−d)/m` so that integral
/// boundaries such as 60 are hit exactly.
pub fn ratio(a: &str, b: &str) -> f64 {
    let m = a.chars().count().max(b.chars().count());
    if m == 0 {
        return 0.0;
    }
    let d = levenshtein(a, b);
    (100 * (m - d)) as f64 / m as f64
}

/// Best proximity of `keyword` to the whole normalized attribute name or any of its tokens.
pub fn similarity(attribute: &str, keyword: &str) -> f64 {
    let keyword = normalize(keyword);
    let whole = normalize(attribute);
    if keyword.is_empty() || whole.is_empty() {
        return 0.0;
    }
    tokenize(attribute)
        .iter()
        .map(|t| ratio(t, &keyword))
        .fold(ratio(&whole, &keyword), f64::max)
}
