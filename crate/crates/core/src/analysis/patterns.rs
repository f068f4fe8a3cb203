use std::collections::BTreeSet;

use regex::Regex;
use regex_syntax::ast::{self, Ast};
use serde::{Deserialize, Serialize};

pub const DEFAULT_PATTERNS_YAML: &str = include_str!("../defaults/patterns.yaml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validator {
    Luhn,
}

impl Validator {
    pub fn accepts(self, candidate: &str) -> bool {
        match self {
            Self::Luhn => luhn_valid(candidate),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixtures {
    #[serde(default)]
    pub positive: Vec<String>,
    #[serde(default)]
    pub negative: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternDef {
    pub id: String,
    pub category: String,
    pub regex: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validator: Option<Validator>,
    #[serde(default = "enabled_by_default")]
    pub enabled: bool,
    #[serde(default)]
    pub fixtures: Fixtures,
}

fn enabled_by_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PatternError {
    #[error("cannot parse pattern table: {0}")]
    Parse(String),
    #[error("pattern '{id}' is listed twice")]
    Duplicate { id: String },
    #[error("pattern '{id}' is outside the portable dialect: {reason}")]
    NotPortable { id: String, reason: String },
    #[error("pattern '{id}' does not compile: {reason}")]
    Compile { id: String, reason: String },
    #[error("pattern '{id}' needs at least one positive and one negative fixture")]
    MissingFixtures { id: String },
    #[error("pattern '{id}' {expectation} fixture {fixture:?}")]
    FixtureMismatch {
        id: String,
        expectation: &'static str,
        fixture: String,
    },
}

/// Target engines for in-place evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    /// PostgreSQL advanced regular expressions (`~` operator).
    Postgres,
    /// PCRE as used by MongoDB's `$regex`.
    Pcre,
}

#[derive(Debug, Clone)]
pub struct CompiledPattern {
    def: PatternDef,
    regex: Regex,
}

impl CompiledPattern {
    pub fn compile(def: PatternDef) -> Result<Self, PatternError> {
        check_portable(&def.id, &def.regex)?;
        let regex = Regex::new(&def.regex).map_err(|e| PatternError::Compile {
            id: def.id.clone(),
            reason: e.to_string(),
        })?;
        Ok(Self { def, regex })
    }

    pub fn id(&self) -> &str {
        &self.def.id
    }

    pub fn def(&self) -> &PatternDef {
        &self.def
    }

    /// True when some occurrence in `value` matches (and passes the validator, if any).
    pub fn is_match(&self, value: &str) -> bool {
        match self.def.validator {
            None => self.regex.is_match(value),
            Some(v) => self.regex.find_iter(value).any(|m| v.accepts(m.as_str())),
        }
    }

    /// The pattern rewritten for a storage engine, or why that is impossible.
    pub fn translate(&self, dialect: Dialect) -> Result<String, String> {
        if let Some(v) = self.def.validator {
            return Err(format!("pattern '{}' needs the {v:?} validator, which engines cannot run", self.def.id));
        }
        Ok(match dialect {
            Dialect::Pcre => self.def.regex.clone(),
            Dialect::Postgres => translate_postgres(&self.def.regex),
        })
    }

    fn check_fixtures(&self) -> Result<(), PatternError> {
        let f = &self.def.fixtures;
        if f.positive.is_empty() || f.negative.is_empty() {
            return Err(PatternError::MissingFixtures { id: self.def.id.clone() });
        }
        let mismatch = |expectation, fixture: &String| PatternError::FixtureMismatch {
            id: self.def.id.clone(),
            expectation,
            fixture: fixture.clone(),
        };
        if let Some(bad) = f.positive.iter().find(|p| !self.is_match(p)) {
            return Err(mismatch("does not match positive", bad));
        }
        if let Some(bad) = f.negative.iter().find(|n| self.is_match(n)) {
            return Err(mismatch("matches negative", bad));
        }
        Ok(())
    }
}

/// Enabled, validated data patterns.
#[derive(Debug, Clone)]
pub struct PatternTable {
    patterns: Vec<CompiledPattern>,
}

impl PatternTable {
    pub fn from_defs(defs: Vec<PatternDef>) -> Result<Self, PatternError> {
        let mut seen = BTreeSet::new();
        let mut patterns = Vec::new();
        for def in defs {
            if !seen.insert(def.id.clone()) {
                return Err(PatternError::Duplicate { id: def.id });
            }
            // Disabled patterns are still checked so enabling one later cannot surprise.
            let enabled = def.enabled;
            let compiled = CompiledPattern::compile(def)?;
            compiled.check_fixtures()?;
            if enabled {
                patterns.push(compiled);
            }
        }
        Ok(Self { patterns })
    }

    pub fn from_yaml(text: &str) -> Result<Self, PatternError> {
        #[derive(Deserialize)]
        struct File {
            patterns: Vec<PatternDef>,
        }
        let file: File = serde_yaml::from_str(text).map_err(|e| PatternError::Parse(e.to_string()))?;
        Self::from_defs(file.patterns)
    }

    pub fn patterns(&self) -> &[CompiledPattern] {
        &self.patterns
    }

    pub fn get(&self, id: &str) -> Option<&CompiledPattern> {
        self.patterns.iter().find(|p| p.id() == id)
    }

    pub fn matches_any(&self, value: &str) -> bool {
        self.patterns.iter().any(|p| p.is_match(value))
    }
}

impl Default for PatternTable {
    fn default() -> Self {
        Self::from_yaml(DEFAULT_PATTERNS_YAML).expect("shipped pattern table is valid")
    }
}

/// Rejects constructs whose meaning differs between the supported engines.
/// Backreferences and lookaround never parse here in the first place.
pub fn check_portable(id: &str, pattern: &str) -> Result<(), PatternError> {
    let not_portable = |reason: String| PatternError::NotPortable {
        id: id.to_string(),
        reason,
    };
    let ast = ast::parse::Parser::new()
        .parse(pattern)
        .map_err(|e| not_portable(e.kind().to_string()))?;
    let mut stack = vec![&ast];
    while let Some(node) = stack.pop() {
        match node {
            Ast::Flags(_) => return Err(not_portable("inline flags".into())),
            Ast::ClassUnicode(_) => return Err(not_portable("unicode classes".into())),
            Ast::ClassPerl(_) => return Err(not_portable("shorthand classes (\\d, \\w, \\s)".into())),
            Ast::Assertion(a) => match &a.kind {
                ast::AssertionKind::StartLine
                | ast::AssertionKind::EndLine
                | ast::AssertionKind::WordBoundary => {}
                other => return Err(not_portable(format!("assertion {other:?}"))),
            },
            Ast::Repetition(r) => {
                if !r.greedy {
                    return Err(not_portable("lazy quantifiers".into()));
                }
                stack.push(&r.ast);
            }
            Ast::Group(g) => {
                match &g.kind {
                    ast::GroupKind::CaptureName { .. } => return Err(not_portable("named groups".into())),
                    ast::GroupKind::NonCapturing(flags) if !flags.items.is_empty() => {
                        return Err(not_portable("inline flags".into()))
                    }
                    _ => {}
                }
                stack.push(&g.ast);
            }
            Ast::ClassBracketed(c) => check_class(&c.kind).map_err(not_portable)?,
            Ast::Alternation(a) => stack.extend(a.asts.iter()),
            Ast::Concat(c) => stack.extend(c.asts.iter()),
            Ast::Empty(_) | Ast::Literal(_) | Ast::Dot(_) => {}
        }
    }
    Ok(())
}

fn check_class(set: &ast::ClassSet) -> Result<(), String> {
    match set {
        ast::ClassSet::BinaryOp(_) => Err("class set operations".into()),
        ast::ClassSet::Item(item) => check_class_item(item),
    }
}

fn check_class_item(item: &ast::ClassSetItem) -> Result<(), String> {
    match item {
        ast::ClassSetItem::Unicode(_) => Err("unicode classes".into()),
        ast::ClassSetItem::Perl(_) => Err("shorthand classes (\\d, \\w, \\s)".into()),
        ast::ClassSetItem::Ascii(_) => Err("POSIX classes".into()),
        ast::ClassSetItem::Bracketed(b) => check_class(&b.kind),
        ast::ClassSetItem::Union(u) => u.items.iter().try_for_each(check_class_item),
        ast::ClassSetItem::Empty(_) | ast::ClassSetItem::Literal(_) | ast::ClassSetItem::Range(_) => Ok(()),
    }
}

/// PostgreSQL spells the word boundary `\y`; everything else in the portable subset carries over.
fn translate_postgres(pattern: &str) -> String {
    let mut out = String::with_capacity(pattern.len());
    let mut chars = pattern.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('b') => out.push_str("\\y"),
                Some(next) => {
                    out.push('\\');
                    out.push(next);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

pub fn luhn_valid(candidate: &str) -> bool {
    let digits: Vec<u32> = candidate.chars().filter_map(|c| c.to_digit(10)).collect();
    if digits.len() < 2 {
        return false;
    }
    let sum: u32 = digits
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| {
            if i % 2 == 1 {
                let doubled = d * 2;
                if doubled > 9 {
                    doubled - 9
                } else {
                    doubled
                }
            } else {
                d
            }
        })
        .sum();
    sum % 10 == 0
}
