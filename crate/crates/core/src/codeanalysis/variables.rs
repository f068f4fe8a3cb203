use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_yaml::Value;

use super::dialect::{first_document, is_yaml_path, scalar_string, Dialect, IacDocument};
use super::source::{join_tree_path, SourceTree};

/// Nested substitutions deeper than this leave the variable unresolved.
pub const MAX_SUBSTITUTION_DEPTH: usize = 10;

/// Binding scopes, highest precedence first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    ProcessEnvironmentStub,
    EnvFile,
    ComposeTopLevel,
    AnsibleVars,
}

impl Scope {
    fn syntax(self) -> Syntax {
        match self {
            Self::AnsibleVars => Syntax::Jinja,
            _ => Syntax::Shell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableBinding {
    pub name: String,
    /// Raw value, possibly containing placeholders.
    pub value: String,
    pub origin: String,
    pub scope: Scope,
    pub shadowed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Syntax {
    /// `${NAME}`, `$NAME`, `${NAME:-default}`, `${NAME-default}`, `$$`.
    Shell,
    /// `{{ name }}`, `{{ name | default('x') }}`.
    Jinja,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expansion {
    /// `None` when any placeholder could not be resolved.
    pub value: Option<String>,
    /// Variables consulted, in order of first use.
    pub used: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum DefaultValue {
    /// Shell defaults may themselves contain placeholders.
    Shell(String),
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Fallback {
    value: DefaultValue,
    /// `:-` and `default(x, true)` also replace empty values.
    if_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Var { name: String, default: Option<Fallback> },
    /// An expression outside the supported subset.
    Opaque(String),
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn parse_shell(text: &str) -> Vec<Segment> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut lit = String::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] != '$' {
            lit.push(chars[i]);
            i += 1;
            continue;
        }
        match chars.get(i + 1) {
            Some('$') => {
                lit.push('$');
                i += 2;
            }
            Some('{') => {
                let Some(close) = matching_brace(&chars, i + 1) else {
                    out.extend(flush(&mut lit));
                    out.push(Segment::Opaque(chars[i..].iter().collect()));
                    return out;
                };
                let inner: String = chars[i + 2..close].iter().collect();
                out.extend(flush(&mut lit));
                out.push(parse_braced(&inner));
                i = close + 1;
            }
            Some(&c) if is_name_start(c) => {
                let end = (i + 1..chars.len()).find(|&j| !is_name_char(chars[j])).unwrap_or(chars.len());
                out.extend(flush(&mut lit));
                out.push(Segment::Var {
                    name: chars[i + 1..end].iter().collect(),
                    default: None,
                });
                i = end;
            }
            _ => {
                lit.push('$');
                i += 1;
            }
        }
    }
    out.extend(flush(&mut lit));
    out
}

fn flush(lit: &mut String) -> Option<Segment> {
    (!lit.is_empty()).then(|| Segment::Literal(std::mem::take(lit)))
}

fn matching_brace(chars: &[char], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (j, &c) in chars.iter().enumerate().skip(open) {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

fn parse_braced(inner: &str) -> Segment {
    let name_len = inner.find(|c: char| !is_name_char(c)).unwrap_or(inner.len());
    let (name, rest) = inner.split_at(name_len);
    if name.is_empty() || !name.starts_with(is_name_start) {
        return Segment::Opaque(format!("${{{inner}}}"));
    }
    let default = if rest.is_empty() {
        None
    } else if let Some(d) = rest.strip_prefix(":-") {
        Some(Fallback {
            value: DefaultValue::Shell(d.to_string()),
            if_empty: true,
        })
    } else if let Some(d) = rest.strip_prefix('-') {
        Some(Fallback {
            value: DefaultValue::Shell(d.to_string()),
            if_empty: false,
        })
    } else {
        // `:?`, `:+` and friends are not supported.
        return Segment::Opaque(format!("${{{inner}}}"));
    };
    Segment::Var {
        name: name.to_string(),
        default,
    }
}

fn parse_jinja(text: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        if start > 0 {
            out.push(Segment::Literal(rest[..start].to_string()));
        }
        let Some(len) = rest[start + 2..].find("}}") else {
            out.push(Segment::Opaque(rest[start..].to_string()));
            return out;
        };
        let expr = &rest[start + 2..start + 2 + len];
        out.push(parse_jinja_expr(expr));
        rest = &rest[start + 2 + len + 2..];
    }
    if !rest.is_empty() {
        out.push(Segment::Literal(rest.to_string()));
    }
    out
}

fn is_identifier(s: &str) -> bool {
    s.starts_with(is_name_start) && s.chars().all(is_name_char)
}

fn parse_jinja_expr(expr: &str) -> Segment {
    let opaque = || Segment::Opaque(format!("{{{{{expr}}}}}"));
    let mut parts = expr.split('|').map(str::trim);
    let name = parts.next().unwrap_or_default();
    if !is_identifier(name) {
        return opaque();
    }
    let mut default = None;
    for filter in parts {
        let Some(args) = filter
            .strip_prefix("default")
            .or_else(|| filter.strip_prefix('d'))
            .map(str::trim)
            .and_then(|a| a.strip_prefix('('))
            .and_then(|a| a.strip_suffix(')'))
        else {
            return opaque();
        };
        let (literal, flag) = match args.rsplit_once(',') {
            Some((lit, flag)) if matches!(flag.trim(), "true" | "True") => (lit.trim(), true),
            _ => (args.trim(), false),
        };
        let unquoted = literal
            .strip_prefix('\'')
            .and_then(|l| l.strip_suffix('\''))
            .or_else(|| literal.strip_prefix('"').and_then(|l| l.strip_suffix('"')));
        match unquoted {
            Some(v) if default.is_none() => {
                default = Some(Fallback {
                    value: DefaultValue::Literal(v.to_string()),
                    if_empty: flag,
                })
            }
            _ => return opaque(),
        }
    }
    Segment::Var {
        name: name.to_string(),
        default,
    }
}

fn parse(text: &str, syntax: Syntax) -> Vec<Segment> {
    match syntax {
        Syntax::Shell => parse_shell(text),
        Syntax::Jinja => parse_jinja(text),
    }
}

/// Names and default values of every `${NAME:-default}` or `${NAME-default}` in `text`.
pub fn inline_defaults(text: &str) -> Vec<(String, String)> {
    parse_shell(text)
        .into_iter()
        .filter_map(|s| match s {
            Segment::Var {
                name,
                default: Some(Fallback {
                    value: DefaultValue::Shell(d),
                    ..
                }),
            } => Some((name, d)),
            _ => None,
        })
        .collect()
}

/// Parses a dotenv file. Single-quoted values are taken literally; double-quoted
/// values understand `\n`, `\"` and `\\`; unquoted values end at ` #`.
pub fn parse_dotenv(text: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let line = line.strip_prefix("export ").map(str::trim_start).unwrap_or(line);
        let Some((key, raw)) = line.split_once('=') else { continue };
        let key = key.trim();
        if !is_identifier(key) {
            continue;
        }
        let raw = raw.trim();
        let value = if let Some(inner) = raw.strip_prefix('\'').and_then(|r| r.split_once('\'')) {
            // Escaped so that later shell expansion reproduces it verbatim.
            inner.0.replace('$', "$$")
        } else if let Some(inner) = raw.strip_prefix('"') {
            let mut value = String::new();
            let mut chars = inner.chars();
            while let Some(c) = chars.next() {
                match c {
                    '"' => break,
                    '\\' => match chars.next() {
                        Some('n') => value.push('\n'),
                        Some(other) => value.push(other),
                        None => {}
                    },
                    c => value.push(c),
                }
            }
            value
        } else {
            match raw.find(" #") {
                Some(i) => raw[..i].trim_end().to_string(),
                None => raw.to_string(),
            }
        };
        out.push((key.to_string(), value));
    }
    out
}

fn is_env_file(path: &str) -> bool {
    let base = path.rsplit('/').next().unwrap_or(path);
    base == ".env"
}

/// Files holding plain Ansible variable mappings by convention.
fn is_ansible_vars_path(path: &str) -> bool {
    if !is_yaml_path(path) {
        return false;
    }
    let parts: Vec<&str> = path.split('/').collect();
    let n = parts.len();
    parts.iter().any(|p| *p == "group_vars" || *p == "host_vars")
        || (n >= 4 && parts[n - 4] == "roles" && matches!(parts[n - 2], "defaults" | "vars"))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Variables {
    /// All bindings, sorted by (name, scope, origin). At most one per name is not shadowed.
    pub bindings: Vec<VariableBinding>,
    resolved: BTreeMap<String, Option<String>>,
    pub diagnostics: Vec<String>,
}

impl Variables {
    /// Builds the binding set from a stub environment and bindings found in the tree,
    /// then resolves every winning binding.
    pub fn new(mut bindings: Vec<VariableBinding>) -> Self {
        bindings.sort_by(|a, b| (&a.name, a.scope, &a.origin).cmp(&(&b.name, b.scope, &b.origin)));
        bindings.dedup_by(|a, b| a.name == b.name && a.scope == b.scope && a.origin == b.origin);
        let mut previous: Option<String> = None;
        for b in &mut bindings {
            b.shadowed = previous.as_deref() == Some(b.name.as_str());
            previous = Some(b.name.clone());
        }
        let mut vars = Self {
            bindings,
            resolved: BTreeMap::new(),
            diagnostics: Vec::new(),
        };
        vars.resolve_all();
        vars
    }

    pub fn winner(&self, name: &str) -> Option<&VariableBinding> {
        let start = self.bindings.partition_point(|b| b.name.as_str() < name);
        self.bindings.get(start).filter(|b| b.name == name)
    }

    /// Resolved value of a bound variable; `None` if unbound or unresolvable.
    pub fn get(&self, name: &str) -> Option<&str> {
        self.resolved.get(name).and_then(|v| v.as_deref())
    }

    /// Expands the placeholders of `text`.
    pub fn expand(&self, text: &str, syntax: Syntax) -> Expansion {
        let mut used = Vec::new();
        let value = self.expand_segments(&parse(text, syntax), &mut used, &mut |name| self.lookup(name));
        Expansion { value, used }
    }

    fn lookup(&self, name: &str) -> Lookup {
        match (self.winner(name), self.resolved.get(name)) {
            (None, _) => Lookup::Unset,
            (Some(b), Some(Some(v))) => Lookup::Value(v.clone(), b.scope),
            (Some(_), _) => Lookup::Unresolved,
        }
    }

    fn expand_segments(
        &self,
        segments: &[Segment],
        used: &mut Vec<String>,
        lookup: &mut dyn FnMut(&str) -> Lookup,
    ) -> Option<String> {
        let mut out = String::new();
        let mut ok = true;
        for segment in segments {
            match segment {
                Segment::Literal(s) => out.push_str(s),
                Segment::Opaque(_) => ok = false,
                Segment::Var { name, default } => {
                    if !used.contains(name) {
                        used.push(name.clone());
                    }
                    let found = lookup(name);
                    let use_default = match (&found, default) {
                        (_, None) => false,
                        (Lookup::Unset, Some(_)) => true,
                        // An inline default elsewhere in the project does not override this one.
                        (Lookup::Value(_, Scope::ComposeTopLevel), Some(_)) => true,
                        (Lookup::Value(v, _), Some(d)) => d.if_empty && v.is_empty(),
                        (Lookup::Unresolved, Some(_)) => false,
                    };
                    if use_default {
                        match &default.as_ref().expect("checked").value {
                            DefaultValue::Literal(v) => out.push_str(v),
                            DefaultValue::Shell(raw) => {
                                match self.expand_segments(&parse_shell(raw), used, lookup) {
                                    Some(v) => out.push_str(&v),
                                    None => ok = false,
                                }
                            }
                        }
                        continue;
                    }
                    match found {
                        Lookup::Value(v, _) => out.push_str(&v),
                        _ => ok = false,
                    }
                }
            }
        }
        ok.then_some(out)
    }

    fn resolve_all(&mut self) {
        let names: Vec<String> = self.bindings.iter().filter(|b| !b.shadowed).map(|b| b.name.clone()).collect();
        let mut state = Resolution::default();
        for name in &names {
            self.resolve(name, &mut Vec::new(), &mut state);
        }
        self.resolved = state.done;
        self.diagnostics = state.diagnostics.into_iter().collect();
    }

    fn resolve(&self, name: &str, stack: &mut Vec<String>, state: &mut Resolution) -> Lookup {
        let Some(binding) = self.winner(name) else { return Lookup::Unset };
        if let Some(done) = state.done.get(name) {
            return match done {
                Some(v) => Lookup::Value(v.clone(), binding.scope),
                None => Lookup::Unresolved,
            };
        }
        if let Some(pos) = stack.iter().position(|n| n == name) {
            let cycle = &stack[pos..];
            let smallest = (0..cycle.len()).min_by_key(|&i| &cycle[i]).unwrap_or(0);
            let rotated: Vec<&str> = cycle[smallest..]
                .iter()
                .chain(&cycle[..smallest])
                .map(String::as_str)
                .collect();
            state.diagnostics.insert(format!("circular reference {}", rotated.join("↔")));
            state.cyclic.extend(cycle.iter().cloned());
            return Lookup::Unresolved;
        }
        if stack.len() >= MAX_SUBSTITUTION_DEPTH {
            state.diagnostics.insert(format!(
                "variable '{}': substitution deeper than {MAX_SUBSTITUTION_DEPTH} levels",
                stack[0]
            ));
            state.depth_hits += 1;
            return Lookup::Unresolved;
        }
        stack.push(name.to_string());
        let segments = parse(&binding.value, binding.scope.syntax());
        let mut used = Vec::new();
        let depth_hits = state.depth_hits;
        let value = self.expand_segments(&segments, &mut used, &mut |n| self.resolve(n, stack, state));
        stack.pop();
        // Cycle members stay unresolved even if a default papered over the back edge.
        let value = if state.cyclic.contains(name) { None } else { value };
        // A result cut off by the depth cap only holds for the outermost variable.
        if state.depth_hits == depth_hits || stack.is_empty() {
            state.done.insert(name.to_string(), value.clone());
        }
        match value {
            Some(v) => Lookup::Value(v, binding.scope),
            None => Lookup::Unresolved,
        }
    }
}

#[derive(Default)]
struct Resolution {
    done: BTreeMap<String, Option<String>>,
    cyclic: BTreeSet<String>,
    depth_hits: usize,
    diagnostics: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Lookup {
    Unset,
    Unresolved,
    Value(String, Scope),
}

/// Gathers bindings from `.env` files, compose inline defaults and Ansible
/// variables (play `vars`, `vars_files`, `group_vars`, `host_vars`, role
/// `defaults` and `vars`), plus the stub environment.
pub fn collect_variables(
    docs: &[IacDocument],
    tree: &SourceTree,
    environment_stub: &BTreeMap<String, String>,
) -> Variables {
    let mut bindings = Vec::new();
    let mut push = |name: &str, value: String, origin: &str, scope: Scope| {
        bindings.push(VariableBinding {
            name: name.to_string(),
            value,
            origin: origin.to_string(),
            scope,
            shadowed: false,
        })
    };
    for (name, value) in environment_stub {
        push(name, value.clone(), "<environment>", Scope::ProcessEnvironmentStub);
    }
    let mut diagnostics = Vec::new();
    for file in &tree.files {
        if is_env_file(&file.path) {
            if let Some(text) = tree.text(&file.path) {
                for (k, v) in parse_dotenv(text) {
                    push(&k, v, &file.path, Scope::EnvFile);
                }
            }
        }
    }
    let mut vars_files = BTreeSet::new();
    for doc in docs {
        match doc.dialect {
            Dialect::DockerCompose => {
                for (k, v) in &doc.raw_variables {
                    push(k, v.clone(), &doc.path, Scope::ComposeTopLevel);
                }
            }
            Dialect::Ansible => {
                for (k, v) in &doc.raw_variables {
                    push(k, v.clone(), &doc.path, Scope::AnsibleVars);
                }
                for play in doc.parsed.as_sequence().into_iter().flatten() {
                    let listed = play.get("vars_files").and_then(Value::as_sequence).into_iter().flatten();
                    for file in listed.filter_map(Value::as_str) {
                        match join_tree_path(&doc.path, file) {
                            Some(p) if !file.contains("{{") => {
                                vars_files.insert(p);
                            }
                            _ => diagnostics.push(format!("{}: vars file '{file}' not resolvable", doc.path)),
                        }
                    }
                }
            }
            _ => {}
        }
    }
    for file in &tree.files {
        if is_ansible_vars_path(&file.path) {
            vars_files.insert(file.path.clone());
        }
    }
    for path in &vars_files {
        let Some(text) = tree.text(path) else {
            diagnostics.push(format!("vars file '{path}' not found"));
            continue;
        };
        match first_document(text) {
            Ok(Some(Value::Mapping(m))) => {
                for (k, v) in &m {
                    if let (Some(k), Some(v)) = (k.as_str(), scalar_string(v)) {
                        push(k, v, path, Scope::AnsibleVars);
                    }
                }
            }
            Ok(_) => {}
            Err(e) => diagnostics.push(format!("{path}: YAML parse error: {e}")),
        }
    }
    let mut vars = Variables::new(bindings);
    vars.diagnostics.extend(diagnostics);
    vars
}
