use std::collections::BTreeMap;
use std::time::Duration;

use mongodb::bson::{doc, Bson, Document};
use mongodb::error::{Error as MongoError, ErrorKind};
use mongodb::options::{ClientOptions, Credential, ServerAddress};
use mongodb::sync::Client;
use serde_json::Value;

use super::document::{flatten, value_type};
use super::{
    AttributeMeta, Capabilities, CollectionProfile, Entity, InPlaceMatch, RetrievalError, SamplingConfig,
    Session, StorageAdapter,
};
use crate::analysis::{CompiledPattern, Dialect};
use crate::codeanalysis::{ConnectionDescriptor, Field};

pub const STORAGE_TYPE: &str = "mongodb";
const TIMEOUT: Duration = Duration::from_secs(5);
const SYSTEM_DATABASES: [&str; 3] = ["admin", "config", "local"];

#[derive(Debug, Clone, Default)]
pub struct MongoAdapter;

impl MongoAdapter {
    pub fn new() -> Self {
        Self
    }
}

impl StorageAdapter for MongoAdapter {
    fn storage_type(&self) -> &str {
        STORAGE_TYPE
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            in_place_regex: true,
            exact_count: true,
        }
    }

    fn connect(&self, descriptor: &ConnectionDescriptor) -> Result<Box<dyn Session>, RetrievalError> {
        let Field::Value(host) = &descriptor.host else {
            return Err(RetrievalError::Connect("no host".into()));
        };
        let mut options = ClientOptions::default();
        options.hosts = vec![ServerAddress::Tcp {
            host: host.clone(),
            port: descriptor.port.value().copied(),
        }];
        options.app_name = Some("teiresias".into());
        options.connect_timeout = Some(TIMEOUT);
        options.server_selection_timeout = Some(TIMEOUT);
        options.direct_connection = Some(true);
        if let Field::Value(user) = &descriptor.username {
            let mut credential = Credential::default();
            credential.username = Some(user.clone());
            if let Field::Value(secret) = &descriptor.password {
                credential.password = Some(secret.reveal().map_err(|e| RetrievalError::Auth(e.to_string()))?);
            }
            credential.source = Some("admin".into());
            options.credential = Some(credential);
        }
        let client = Client::with_options(options).map_err(classify_error)?;
        client
            .database("admin")
            .run_command(doc! {"ping": 1})
            .run()
            .map_err(classify_error)?;
        Ok(Box::new(MongoSession {
            storage_ref: descriptor.id.clone(),
            client,
            database: descriptor.database.value().cloned(),
        }))
    }
}

pub struct MongoSession {
    storage_ref: String,
    client: Client,
    /// When unset, every non-system database is scanned and collections are named `db.collection`.
    database: Option<String>,
}

fn classify_error(e: MongoError) -> RetrievalError {
    match *e.kind {
        ErrorKind::Authentication { .. } => RetrievalError::Auth(e.to_string()),
        ErrorKind::ServerSelection { .. } | ErrorKind::Io(_) | ErrorKind::DnsResolve { .. } => {
            RetrievalError::Connect(e.to_string())
        }
        ErrorKind::Command(ref c) if c.code == 13 => RetrievalError::PermissionDenied(e.to_string()),
        ErrorKind::Command(ref c) if c.code == 2 || c.code == 51091 => {
            RetrievalError::PatternUnsupported(e.to_string())
        }
        _ => RetrievalError::Query(e.to_string()),
    }
}

impl MongoSession {
    fn collection(&self, collection: &str) -> Result<mongodb::sync::Collection<Document>, RetrievalError> {
        let (db, name) = match &self.database {
            Some(db) => (db.as_str(), collection),
            None => collection
                .split_once('.')
                .ok_or_else(|| RetrievalError::NotFound(collection.to_string()))?,
        };
        Ok(self.client.database(db).collection(name))
    }
}

fn reference_of(id: Option<&Bson>) -> String {
    match id {
        Some(Bson::ObjectId(oid)) => oid.to_hex(),
        Some(Bson::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    }
}

impl Session for MongoSession {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            in_place_regex: true,
            exact_count: true,
        }
    }

    fn list_collections(&mut self) -> Result<Vec<String>, RetrievalError> {
        let databases = match &self.database {
            Some(db) => vec![db.clone()],
            None => {
                let mut names = self.client.list_database_names().run().map_err(classify_error)?;
                names.retain(|n| !SYSTEM_DATABASES.contains(&n.as_str()));
                names
            }
        };
        let mut out = Vec::new();
        for db in databases {
            let mut names = self
                .client
                .database(&db)
                .list_collection_names()
                .run()
                .map_err(classify_error)?;
            names.retain(|n| !n.starts_with("system."));
            names.sort();
            for name in names {
                out.push(if self.database.is_some() { name } else { format!("{db}.{name}") });
            }
        }
        Ok(out)
    }

    fn profile(&mut self, collection: &str, sampling: &SamplingConfig) -> Result<CollectionProfile, RetrievalError> {
        let coll = self.collection(collection)?;
        let count = coll.count_documents(doc! {}).run().map_err(classify_error)?;
        let cursor = coll
            .find(doc! {})
            .sort(doc! {"_id": 1})
            .limit(i64::try_from(sampling.limit).unwrap_or(i64::MAX))
            .run()
            .map_err(classify_error)?;
        let mut sample = Vec::new();
        let mut types: BTreeMap<String, &'static str> = BTreeMap::new();
        for document in cursor {
            let mut document = document.map_err(classify_error)?;
            let reference = reference_of(document.get("_id"));
            document.remove("_id");
            let json = Bson::Document(document).into_relaxed_extjson();
            let values: BTreeMap<String, Value> = flatten(&json);
            for (key, value) in &values {
                if !value.is_null() {
                    types.entry(key.clone()).or_insert(value_type(value));
                } else {
                    types.entry(key.clone()).or_insert("null");
                }
            }
            sample.push(Entity { reference, values });
        }
        let attributes = types.into_iter().map(|(name, t)| AttributeMeta::new(name, t)).collect();
        Ok(CollectionProfile {
            storage_ref: self.storage_ref.clone(),
            collection: collection.to_string(),
            attributes,
            entity_count: count,
            count_estimated: false,
            primary_key: Some("_id".into()),
            sample,
            sampling: sampling.clone(),
        })
    }

    fn count_matches(
        &mut self,
        collection: &str,
        attribute: &str,
        pattern: &CompiledPattern,
        reference_cap: usize,
    ) -> Result<InPlaceMatch, RetrievalError> {
        let regex = pattern.translate(Dialect::Pcre).map_err(RetrievalError::PatternUnsupported)?;
        let coll = self.collection(collection)?;
        let filter = doc! { attribute: { "$regex": regex } };
        let count = coll.count_documents(filter.clone()).run().map_err(classify_error)?;
        let cursor = coll
            .find(filter)
            .projection(doc! {"_id": 1})
            .sort(doc! {"_id": 1})
            .limit(i64::try_from(reference_cap).unwrap_or(i64::MAX))
            .run()
            .map_err(classify_error)?;
        let mut references = Vec::new();
        for document in cursor {
            references.push(reference_of(document.map_err(classify_error)?.get("_id")));
        }
        Ok(InPlaceMatch { count, references })
    }
}
