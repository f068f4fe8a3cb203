use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde_yaml::Value;

use super::descriptor::{ConnectionDescriptor, DescriptorSource, Field};
use super::dialect::{scalar_string, Dialect, IacDocument, TASK_KEYWORDS};
use super::lookup::{FieldDefault, LookupTable, StorageRule};
use super::source::{join_tree_path, SourceTree};
use super::variables::{parse_dotenv, Syntax, Variables};
use crate::secret::Secret;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    /// Ordered by (file, locator); locator indices compare numerically.
    pub descriptors: Vec<ConnectionDescriptor>,
    pub diagnostics: Vec<String>,
}

/// A raw value and where it was written.
#[derive(Debug, Clone)]
struct Located {
    raw: String,
    file: String,
    locator: String,
    syntax: Syntax,
}

/// A resolved field value with its provenance.
#[derive(Debug, Clone)]
enum Resolved {
    Value(String, String),
    Unresolved(String),
    NotApplicable,
}

struct Context<'a> {
    origin: &'a str,
    tree: &'a SourceTree,
    vars: &'a Variables,
    lookup: &'a LookupTable,
    diagnostics: Vec<String>,
}

impl Context<'_> {
    fn resolve(&self, located: &Located) -> Resolved {
        let expansion = self.vars.expand(&located.raw, located.syntax);
        let mut provenance = format!("{}:{}", located.file, located.locator);
        for name in &expansion.used {
            match self.vars.winner(name) {
                Some(b) => provenance.push_str(&format!(" via {name} ({})", b.origin)),
                None => provenance.push_str(&format!(" via {name} (unbound)")),
            }
        }
        match expansion.value {
            Some(v) => Resolved::Value(v, provenance),
            None => Resolved::Unresolved(provenance),
        }
    }
}

/// Finds storage definitions in compose services and Ansible tasks. Fields that
/// cannot be resolved are marked, never guessed.
pub fn extract_connections(
    origin: &str,
    tree: &SourceTree,
    docs: &[IacDocument],
    vars: &Variables,
    lookup: &LookupTable,
) -> Extraction {
    let mut cx = Context {
        origin,
        tree,
        vars,
        lookup,
        diagnostics: Vec::new(),
    };
    let mut found = Vec::new();
    for doc in docs {
        match doc.dialect {
            Dialect::DockerCompose => compose_document(&mut cx, doc, &mut found),
            Dialect::Ansible => {
                for (pi, play) in doc.parsed.as_sequence().into_iter().flatten().enumerate() {
                    for section in ["pre_tasks", "tasks", "post_tasks", "handlers"] {
                        if let Some(tasks) = play.get(section).and_then(Value::as_sequence) {
                            ansible_tasks(&mut cx, doc, tasks, &format!("plays[{pi}].{section}"), &mut found);
                        }
                    }
                }
            }
            Dialect::AnsibleTasks => {
                if let Some(tasks) = doc.parsed.as_sequence() {
                    ansible_tasks(&mut cx, doc, tasks, "tasks", &mut found);
                }
            }
            Dialect::Unknown => {}
        }
    }
    found.sort_by(|a, b| {
        a.source
            .file
            .cmp(&b.source.file)
            .then_with(|| natural_cmp(&a.source.locator, &b.source.locator))
    });
    let mut descriptors: Vec<ConnectionDescriptor> = Vec::new();
    for d in found {
        match descriptors.iter_mut().find(|e| e.id == d.id) {
            Some(existing) => merge_into(existing, d),
            None => descriptors.push(d),
        }
    }
    Extraction {
        descriptors,
        diagnostics: cx.diagnostics,
    }
}

/// Fills fields the earlier definition of the same storage left unresolved.
fn merge_into(target: &mut ConnectionDescriptor, other: ConnectionDescriptor) {
    fn fill<T>(mine: &mut Field<T>, theirs: Field<T>) -> bool {
        if mine.is_unresolved() && matches!(theirs, Field::Value(_)) {
            *mine = theirs;
            return true;
        }
        false
    }
    let mut filled = Vec::new();
    if fill(&mut target.host, other.host) {
        filled.push("host");
    }
    if fill(&mut target.port, other.port) {
        filled.push("port");
    }
    if fill(&mut target.database, other.database) {
        filled.push("database");
    }
    if fill(&mut target.username, other.username) {
        filled.push("username");
    }
    if fill(&mut target.password, other.password) {
        filled.push("password");
    }
    for field in filled {
        if let Some(p) = other.provenance.get(field) {
            target.provenance.insert(field.to_string(), p.clone());
        }
    }
}

/// Orders `a[2]` before `a[10]`.
fn natural_cmp(a: &str, b: &str) -> Ordering {
    fn chunks(s: &str) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        let mut text = String::new();
        let mut digits = String::new();
        for c in s.chars() {
            if c.is_ascii_digit() {
                digits.push(c);
            } else {
                if !digits.is_empty() {
                    out.push((std::mem::take(&mut text), digits.parse().unwrap_or(u64::MAX)));
                    digits.clear();
                }
                text.push(c);
            }
        }
        out.push((text, digits.parse().unwrap_or(0)));
        out
    }
    chunks(a).cmp(&chunks(b))
}

fn compose_document(cx: &mut Context<'_>, doc: &IacDocument, found: &mut Vec<ConnectionDescriptor>) {
    let Some(services) = doc.parsed.get("services").and_then(Value::as_mapping) else { return };
    for (name, service) in services {
        let Some(name) = name.as_str() else { continue };
        let locator = format!("services.{name}");
        let Some(image) = service.get("image").and_then(scalar_string) else { continue };
        let image = cx.vars.expand(&image, Syntax::Shell).value.unwrap_or(image);
        let Some(rule) = cx.lookup.match_image(&image) else { continue };

        let mut env = BTreeMap::new();
        for env_file in env_files(service.get("env_file")) {
            let Some(path) = join_tree_path(&doc.path, &env_file) else {
                cx.diagnostics.push(format!("{}: {locator}: env_file '{env_file}' is outside the tree", doc.path));
                continue;
            };
            let Some(text) = cx.tree.text(&path) else {
                cx.diagnostics.push(format!("{}: {locator}: env_file '{env_file}' not found", doc.path));
                continue;
            };
            for (k, v) in parse_dotenv(text) {
                let located = Located {
                    raw: v,
                    file: path.clone(),
                    locator: k.clone(),
                    syntax: Syntax::Shell,
                };
                env.insert(k, located);
            }
        }
        environment_entries(service.get("environment"), &doc.path, &format!("{locator}.environment"), Syntax::Shell, &mut env);

        let ports = port_entries(service.get("ports"), &doc.path, &format!("{locator}.ports"), Syntax::Shell);
        let source = DescriptorSource::new(cx.origin, &doc.path, &locator);
        let host = Resolved::Value(name.to_string(), format!("{}:{locator}", doc.path));
        let d = container_descriptor(cx, rule, source, name, host, &env, &ports);
        found.push(d);
    }
}

fn env_files(v: Option<&Value>) -> Vec<String> {
    match v {
        Some(Value::String(s)) => vec![s.clone()],
        Some(Value::Sequence(items)) => items
            .iter()
            .filter_map(|i| match i {
                Value::String(s) => Some(s.clone()),
                Value::Mapping(_) => i.get("path").and_then(Value::as_str).map(str::to_string),
                _ => None,
            })
            .collect(),
        _ => Vec::new(),
    }
}

/// Reads a mapping or `KEY=value` list. A key without a value passes the
/// variable of the same name through.
fn environment_entries(
    v: Option<&Value>,
    file: &str,
    locator: &str,
    syntax: Syntax,
    out: &mut BTreeMap<String, Located>,
) {
    let passthrough = |k: &str| match syntax {
        Syntax::Shell => format!("${{{k}}}"),
        Syntax::Jinja => format!("{{{{ {k} }}}}"),
    };
    let mut put = |k: &str, raw: String| {
        out.insert(
            k.to_string(),
            Located {
                raw,
                file: file.to_string(),
                locator: format!("{locator}.{k}"),
                syntax,
            },
        );
    };
    match v {
        Some(Value::Mapping(m)) => {
            for (k, val) in m {
                let Some(k) = k.as_str() else { continue };
                match val {
                    Value::Null => put(k, passthrough(k)),
                    other => {
                        if let Some(s) = scalar_string(other) {
                            put(k, s)
                        }
                    }
                }
            }
        }
        Some(Value::Sequence(items)) => {
            for item in items.iter().filter_map(Value::as_str) {
                match item.split_once('=') {
                    Some((k, val)) => put(k.trim(), val.to_string()),
                    None => put(item.trim(), passthrough(item.trim())),
                }
            }
        }
        _ => {}
    }
}

struct PortEntry {
    located: Located,
    /// Long-syntax entries carry their parts separately.
    long: Option<(Option<String>, Option<String>)>,
}

fn port_entries(v: Option<&Value>, file: &str, locator: &str, syntax: Syntax) -> Vec<PortEntry> {
    let Some(items) = v.and_then(Value::as_sequence) else { return Vec::new() };
    items
        .iter()
        .enumerate()
        .filter_map(|(i, item)| {
            let located = |raw: String| Located {
                raw,
                file: file.to_string(),
                locator: format!("{locator}[{i}]"),
                syntax,
            };
            match item {
                Value::Mapping(_) => {
                    let published = item.get("published").and_then(scalar_string);
                    let target = item.get("target").and_then(scalar_string);
                    Some(PortEntry {
                        located: located(published.clone().unwrap_or_default()),
                        long: Some((published, target)),
                    })
                }
                other => scalar_string(other).map(|raw| PortEntry {
                    located: located(raw),
                    long: None,
                }),
            }
        })
        .collect()
}

/// Splits `[ip:]published:target[/proto]` into (published, target).
fn split_mapping(spec: &str) -> (Option<String>, Option<String>) {
    let spec = spec.split('/').next().unwrap_or(spec);
    let parts: Vec<&str> = spec.rsplitn(3, ':').collect();
    match parts.as_slice() {
        [target] => (None, Some(target.to_string())),
        [target, published] | [target, published, _] => (
            (!published.is_empty()).then(|| published.to_string()),
            Some(target.to_string()),
        ),
        _ => (None, None),
    }
}

fn first_port(range: &str) -> Option<u16> {
    range.split('-').next()?.trim().parse().ok()
}

/// The published port of the mapping targeting the storage's default port,
/// else of the first published mapping, else the default port.
fn resolve_port(cx: &Context<'_>, rule: &StorageRule, entries: &[PortEntry]) -> Resolved {
    let mut candidates = Vec::new();
    for entry in entries {
        match cx.resolve(&entry.located) {
            Resolved::Value(text, provenance) => {
                let (published, target) = match &entry.long {
                    Some((p, t)) => (p.as_ref().map(|_| text.clone()), t.clone()),
                    None => split_mapping(&text),
                };
                let Some(published) = published else { continue };
                let targets_default = target.as_deref().and_then(first_port) == Some(rule.default_port);
                let value = first_port(&published).map(|p| (p.to_string(), provenance.clone()));
                candidates.push((targets_default, value, provenance));
            }
            Resolved::Unresolved(provenance) => candidates.push((false, None, provenance)),
            Resolved::NotApplicable => {}
        }
    }
    let chosen = candidates
        .iter()
        .find(|(targets_default, value, _)| *targets_default && value.is_some())
        .or_else(|| candidates.first());
    match chosen {
        Some((_, Some((port, _)), provenance)) => Resolved::Value(port.clone(), provenance.clone()),
        Some((_, None, provenance)) => Resolved::Unresolved(provenance.clone()),
        None => Resolved::Value(
            rule.default_port.to_string(),
            format!("default port of {}", rule.storage_type),
        ),
    }
}

fn container_descriptor(
    cx: &Context<'_>,
    rule: &StorageRule,
    source: DescriptorSource,
    host_key: &str,
    host: Resolved,
    env: &BTreeMap<String, Located>,
    ports: &[PortEntry],
) -> ConnectionDescriptor {
    let mut fields = BTreeMap::new();
    fields.insert("host", host);
    fields.insert("port", resolve_port(cx, rule, ports));
    for field in ["username", "password", "database"] {
        let keys = rule.environment.get(field).map(Vec::as_slice).unwrap_or_default();
        if let Some(located) = keys.iter().find_map(|k| env.get(k)) {
            fields.insert(field, cx.resolve(located));
        }
    }
    apply_defaults(rule, &rule.defaults, &format!("default of the {} image", rule.storage_type), &mut fields);
    build(rule, source, host_key, fields)
}

/// Fills absent fields from defaults, then optional fields as not applicable.
/// Everything else stays unresolved.
fn apply_defaults(
    rule: &StorageRule,
    defaults: &BTreeMap<String, FieldDefault>,
    note: &str,
    fields: &mut BTreeMap<&'static str, Resolved>,
) {
    for field in ["host", "port", "username", "password", "database"] {
        if fields.contains_key(field) {
            continue;
        }
        if let Some(FieldDefault::Value(v)) = defaults.get(field) {
            fields.insert(field, Resolved::Value(v.clone(), note.to_string()));
        }
    }
    for field in ["host", "port", "username", "password", "database"] {
        if fields.contains_key(field) {
            continue;
        }
        if let Some(FieldDefault::From { from }) = defaults.get(field) {
            let copied = match fields.get(from.as_str()) {
                Some(Resolved::Value(v, p)) => Resolved::Value(v.clone(), format!("{note}, same as {from} ({p})")),
                Some(Resolved::NotApplicable) => Resolved::NotApplicable,
                _ => Resolved::Unresolved(format!("{note}, same as {from}")),
            };
            fields.insert(field, copied);
        }
    }
    for field in ["host", "port", "username", "password", "database"] {
        if !fields.contains_key(field) && rule.optional.iter().any(|o| o == field) {
            fields.insert(field, Resolved::NotApplicable);
        }
    }
    // A user without a password means the password is configured somewhere we cannot see.
    if matches!(fields.get("password"), Some(Resolved::NotApplicable))
        && !matches!(fields.get("username"), None | Some(Resolved::NotApplicable))
    {
        fields.insert("password", Resolved::Unresolved(String::new()));
    }
}

fn build(
    rule: &StorageRule,
    source: DescriptorSource,
    host_key: &str,
    fields: BTreeMap<&'static str, Resolved>,
) -> ConnectionDescriptor {
    let mut d = ConnectionDescriptor::new(&rule.storage_type, source, host_key);
    for (field, resolved) in fields {
        let (value, provenance) = match resolved {
            Resolved::Value(v, p) => (Some(v), Some(p)),
            Resolved::Unresolved(p) => (None, (!p.is_empty()).then_some(p)),
            Resolved::NotApplicable => {
                match field {
                    "host" => d.host = Field::NotApplicable,
                    "port" => d.port = Field::NotApplicable,
                    "database" => d.database = Field::NotApplicable,
                    "username" => d.username = Field::NotApplicable,
                    _ => d.password = Field::NotApplicable,
                }
                continue;
            }
        };
        if let Some(p) = provenance {
            d.provenance.insert(field.to_string(), p);
        }
        let Some(v) = value else { continue };
        match field {
            "host" => d.host = Field::Value(v),
            // A non-numeric port is as good as unknown.
            "port" => d.port = v.trim().parse().map(Field::Value).unwrap_or(Field::Unresolved),
            "database" => d.database = Field::Value(v),
            "username" => d.username = Field::Value(v),
            _ => d.password = Field::Value(Secret::literal(v)),
        }
    }
    d
}

fn task_module(task: &Value) -> Option<(&str, &Value)> {
    task.as_mapping()?.iter().find_map(|(k, v)| {
        let k = k.as_str()?;
        (!TASK_KEYWORDS.contains(&k) && !k.starts_with("with_")).then_some((k, v))
    })
}

/// Module parameters: the module's mapping, free-form `k=v` pairs and `args`.
fn task_params(task: &Value, module_value: &Value) -> BTreeMap<String, Value> {
    let mut params = BTreeMap::new();
    if let Some(args) = task.get("args").and_then(Value::as_mapping) {
        for (k, v) in args {
            if let Some(k) = k.as_str() {
                params.insert(k.to_string(), v.clone());
            }
        }
    }
    match module_value {
        Value::Mapping(m) => {
            for (k, v) in m {
                if let Some(k) = k.as_str() {
                    params.insert(k.to_string(), v.clone());
                }
            }
        }
        Value::String(s) => {
            for pair in s.split_whitespace() {
                if let Some((k, v)) = pair.split_once('=') {
                    params.insert(k.to_string(), Value::String(v.to_string()));
                }
            }
        }
        _ => {}
    }
    params
}

fn ansible_tasks(
    cx: &mut Context<'_>,
    doc: &IacDocument,
    tasks: &[Value],
    locator: &str,
    found: &mut Vec<ConnectionDescriptor>,
) {
    for (ti, task) in tasks.iter().enumerate() {
        let here = format!("{locator}[{ti}]");
        for nested in ["block", "rescue", "always"] {
            if let Some(inner) = task.get(nested).and_then(Value::as_sequence) {
                ansible_tasks(cx, doc, inner, &format!("{here}.{nested}"), found);
            }
        }
        let Some((module, module_value)) = task_module(task) else { continue };
        let params = task_params(task, module_value);
        let param = |name: &str| -> Option<Located> {
            params.get(name).and_then(scalar_string).map(|raw| Located {
                raw,
                file: doc.path.clone(),
                locator: format!("{here}.{module}.{name}"),
                syntax: Syntax::Jinja,
            })
        };

        if cx.lookup.is_container_module(module) {
            let Some(image) = param("image") else { continue };
            let image = cx.vars.expand(&image.raw, Syntax::Jinja).value.unwrap_or(image.raw);
            let Some(rule) = cx.lookup.match_image(&image) else { continue };
            let host = match param("name") {
                Some(l) => cx.resolve(&l),
                None => Resolved::Unresolved(String::new()),
            };
            let host_key = match &host {
                Resolved::Value(v, _) => v.clone(),
                _ => here.clone(),
            };
            let mut env = BTreeMap::new();
            environment_entries(
                params.get("env"),
                &doc.path,
                &format!("{here}.{module}.env"),
                Syntax::Jinja,
                &mut env,
            );
            let ports = port_entries(
                params.get("published_ports").or_else(|| params.get("ports")),
                &doc.path,
                &format!("{here}.{module}.published_ports"),
                Syntax::Jinja,
            );
            let source = DescriptorSource::new(cx.origin, &doc.path, &here);
            found.push(container_descriptor(cx, rule, source, &host_key, host, &env, &ports));
            continue;
        }

        let Some((rule, module_rule)) = cx.lookup.match_module(module) else { continue };
        let mut fields = BTreeMap::new();
        for field in ["host", "port", "database", "username", "password"] {
            let names = module_rule.params.get(field).map(Vec::as_slice).unwrap_or_default();
            if let Some(located) = names.iter().find_map(|n| param(n)) {
                fields.insert(field, cx.resolve(&located));
            }
        }
        if !fields.contains_key("port") {
            fields.insert(
                "port",
                Resolved::Value(rule.default_port.to_string(), format!("default port of {module}")),
            );
        }
        apply_defaults(rule, &module_rule.defaults, &format!("default of {module}"), &mut fields);
        let host_key = match (fields.get("host"), fields.get("database")) {
            (Some(Resolved::Value(h, _)), Some(Resolved::Value(db, _))) => format!("{h}/{db}"),
            (Some(Resolved::Value(h, _)), _) => h.clone(),
            _ => here.clone(),
        };
        let source = DescriptorSource::new(cx.origin, &doc.path, &here);
        found.push(build(rule, source, &host_key, fields));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codeanalysis::dialect::classify_documents;
    use crate::codeanalysis::source::{SourceFile, SourceOrigin};
    use crate::codeanalysis::variables::collect_variables;

    fn tree(files: &[(&str, &str)]) -> SourceTree {
        SourceTree::new(
            SourceOrigin::LocalDirectory { path: "repo".into() },
            files
                .iter()
                .map(|(p, c)| SourceFile {
                    path: p.to_string(),
                    content: c.as_bytes().to_vec(),
                })
                .collect(),
        )
    }

    fn extract(files: &[(&str, &str)]) -> Extraction {
        let t = tree(files);
        let docs = classify_documents(&t);
        let vars = collect_variables(&docs, &t, &BTreeMap::new());
        extract_connections("repo", &t, &docs, &vars, &LookupTable::default())
    }

    const COMPOSE: &str = "services:\n  db:\n    image: postgres:13\n    environment:\n      POSTGRES_USER: admin\n      POSTGRES_PASSWORD: ${DB_PW}\n    ports: [\"5433:5432\"]\n  web:\n    image: nginx\n";

    #[test]
    fn compose_service_with_env_file() {
        let x = extract(&[("docker-compose.yml", COMPOSE), (".env", "DB_PW=x\n")]);
        assert_eq!(x.descriptors.len(), 1);
        let d = &x.descriptors[0];
        assert_eq!(d.storage_type, "postgresql");
        assert_eq!(d.host, Field::Value("db".into()));
        assert_eq!(d.port, Field::Value(5433));
        assert_eq!(d.username, Field::Value("admin".into()));
        assert_eq!(d.database, Field::Value("admin".into()));
        assert_eq!(d.password, Field::Value(Secret::literal("x")));
        assert!(d.is_complete());
        assert_eq!(d.source.locator, "services.db");
        assert_eq!(d.provenance["password"], "docker-compose.yml:services.db.environment.POSTGRES_PASSWORD via DB_PW (.env)");
    }

    #[test]
    fn missing_binding_leaves_password_unresolved() {
        let x = extract(&[("docker-compose.yml", COMPOSE)]);
        let d = &x.descriptors[0];
        assert_eq!(d.password, Field::Unresolved);
        assert!(!d.is_complete());
    }

    #[test]
    fn default_port_and_optional_mongo_auth() {
        let x = extract(&[("docker-compose.yml", "services:\n  store:\n    image: mongo:6\n    ports: [\"27017\"]\n")]);
        let d = &x.descriptors[0];
        assert_eq!(d.port, Field::Value(27017));
        assert_eq!(d.username, Field::NotApplicable);
        assert_eq!(d.password, Field::NotApplicable);
        assert!(d.is_complete());
    }

    #[test]
    fn ports_prefer_the_storage_mapping() {
        let x = extract(&[(
            "c.yml",
            "services:\n  db:\n    image: postgres\n    environment: [POSTGRES_PASSWORD=p]\n    ports:\n      - \"9187:9187\"\n      - target: 5432\n        published: \"6543\"\n",
        )]);
        assert_eq!(x.descriptors[0].port, Field::Value(6543));
        assert_eq!(x.descriptors[0].username, Field::Value("postgres".into()));
    }

    #[test]
    fn ansible_modules_and_containers() {
        let playbook = "- hosts: db\n  vars:\n    pg_pw: secret\n  tasks:\n    - name: ok\n      apt: name=x\n    - name: create db\n      community.postgresql.postgresql_db:\n        name: app\n        login_host: db.internal\n        login_password: \"{{ pg_pw }}\"\n    - block:\n        - community.docker.docker_container:\n            name: cache\n            image: mongo:6\n            published_ports: [\"27018:27017\"]\n";
        let x = extract(&[("site.yml", playbook)]);
        assert_eq!(x.descriptors.len(), 2);
        let pg = &x.descriptors[0];
        assert_eq!(pg.source.locator, "plays[0].tasks[1]");
        assert_eq!(pg.host, Field::Value("db.internal".into()));
        assert_eq!(pg.port, Field::Value(5432));
        assert_eq!(pg.database, Field::Value("app".into()));
        assert_eq!(pg.username, Field::Value("postgres".into()));
        assert!(pg.is_complete());
        let mongo = &x.descriptors[1];
        assert_eq!(mongo.source.locator, "plays[0].tasks[2].block[0]");
        assert_eq!(mongo.host, Field::Value("cache".into()));
        assert_eq!(mongo.port, Field::Value(27018));
    }

    #[test]
    fn descriptors_of_one_storage_are_merged() {
        let tasks = "- postgresql_db:\n    name: app\n    login_host: h\n- postgresql_user:\n    db: app\n    name: reader\n    login_host: h\n    login_password: pw\n";
        let x = extract(&[("roles/db/tasks/main.yml", tasks)]);
        assert_eq!(x.descriptors.len(), 1);
        assert_eq!(x.descriptors[0].password, Field::Value(Secret::literal("pw")));
        assert_eq!(x.descriptors[0].source.locator, "tasks[0]");
    }

    #[test]
    fn natural_locator_order() {
        assert_eq!(natural_cmp("plays[0].tasks[2]", "plays[0].tasks[10]"), Ordering::Less);
        assert_eq!(natural_cmp("services.a", "services.b"), Ordering::Less);
    }
}
