//! Storage discovery in IaC definitions: source ingestion, Docker Compose and
//! Ansible parsing, variable resolution and connection descriptor extraction.

mod descriptor;
mod dialect;
mod extract;
mod listener;
mod lookup;
mod source;
mod variables;

use std::collections::BTreeMap;

pub use descriptor::{storage_id, ConnectionDescriptor, DescriptorSource, Field, DESCRIPTOR_FIELDS};
pub use dialect::{classify_documents, classify_text, Dialect, IacDocument};
pub use extract::{extract_connections, Extraction};
pub use listener::{DirectoryListener, ListenerError, DEFAULT_DEBOUNCE};
pub use lookup::{
    image_repository, FieldDefault, LookupError, LookupTable, ModuleRule, StorageRule, DEFAULT_LOOKUP_YAML,
};
pub use source::{ingest_source, IgnoreSet, IngestError, SourceFile, SourceOrigin, SourceTree};
pub use variables::{
    collect_variables, parse_dotenv, Expansion, Scope, Syntax, VariableBinding, Variables, MAX_SUBSTITUTION_DEPTH,
};

/// Everything code analysis learned about one source tree.
#[derive(Debug, Clone)]
pub struct CodeAnalysis {
    pub documents: Vec<IacDocument>,
    pub variables: Variables,
    pub descriptors: Vec<ConnectionDescriptor>,
    /// Parse problems, cycles, unresolvable file references.
    pub diagnostics: Vec<String>,
}

/// Classifies, resolves and extracts in one pass. `origin` labels the descriptors' source.
pub fn analyze_tree(
    origin: &str,
    tree: &SourceTree,
    lookup: &LookupTable,
    environment_stub: &BTreeMap<String, String>,
) -> CodeAnalysis {
    let documents = classify_documents(tree);
    let variables = collect_variables(&documents, tree, environment_stub);
    let extraction = extract_connections(origin, tree, &documents, &variables, lookup);
    let mut diagnostics: Vec<String> = documents.iter().flat_map(|d| d.diagnostics.iter().cloned()).collect();
    diagnostics.extend(variables.diagnostics.iter().cloned());
    diagnostics.extend(extraction.diagnostics);
    CodeAnalysis {
        documents,
        variables,
        descriptors: extraction.descriptors,
        diagnostics,
    }
}
