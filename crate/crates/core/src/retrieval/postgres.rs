use std::collections::BTreeMap;
use std::time::Duration;

use postgres::error::SqlState;
use postgres::{Client, NoTls};
use serde_json::Value;

use super::{
    AttributeMeta, Capabilities, CollectionProfile, Entity, InPlaceMatch, RetrievalError, SamplingConfig,
    Session, StorageAdapter,
};
use crate::analysis::{CompiledPattern, Dialect};
use crate::codeanalysis::{ConnectionDescriptor, Field};

pub const STORAGE_TYPE: &str = "postgresql";
const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Default)]
pub struct PostgresAdapter;

impl PostgresAdapter {
    pub fn new() -> Self {
        Self
    }
}

impl StorageAdapter for PostgresAdapter {
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
        let mut config = postgres::Config::new();
        if let Field::Value(host) = &descriptor.host {
            config.host(host);
        }
        if let Field::Value(port) = descriptor.port {
            config.port(port);
        }
        if let Field::Value(db) = &descriptor.database {
            config.dbname(db);
        }
        if let Field::Value(user) = &descriptor.username {
            config.user(user);
        }
        if let Field::Value(secret) = &descriptor.password {
            let password = secret.reveal().map_err(|e| RetrievalError::Auth(e.to_string()))?;
            config.password(password);
        }
        // Every transaction of this session is read-only.
        config
            .options("-c default_transaction_read_only=on")
            .connect_timeout(CONNECT_TIMEOUT)
            .application_name("teiresias");
        let client = config.connect(NoTls).map_err(classify_error)?;
        Ok(Box::new(PostgresSession {
            storage_ref: descriptor.id.clone(),
            client,
        }))
    }
}

pub struct PostgresSession {
    storage_ref: String,
    client: Client,
}

struct Table<'a> {
    schema: &'a str,
    name: &'a str,
}

impl<'a> Table<'a> {
    fn parse(collection: &'a str) -> Result<Self, RetrievalError> {
        collection
            .split_once('.')
            .map(|(schema, name)| Self { schema, name })
            .ok_or_else(|| RetrievalError::NotFound(collection.to_string()))
    }

    fn sql(&self) -> String {
        format!("{}.{}", quote_ident(self.schema), quote_ident(self.name))
    }
}

fn quote_ident(ident: &str) -> String {
    format!("\"{}\"", ident.replace('"', "\"\""))
}

fn classify_error(e: postgres::Error) -> RetrievalError {
    match e.code() {
        Some(c) if *c == SqlState::INVALID_PASSWORD || *c == SqlState::INVALID_AUTHORIZATION_SPECIFICATION => {
            RetrievalError::Auth(e.to_string())
        }
        Some(c) if *c == SqlState::INSUFFICIENT_PRIVILEGE => RetrievalError::PermissionDenied(e.to_string()),
        Some(c) if *c == SqlState::UNDEFINED_TABLE => RetrievalError::NotFound(e.to_string()),
        Some(c) if *c == SqlState::INVALID_REGULAR_EXPRESSION => RetrievalError::PatternUnsupported(e.to_string()),
        Some(_) => RetrievalError::Query(e.to_string()),
        None => RetrievalError::Connect(e.to_string()),
    }
}

impl PostgresSession {
    fn primary_key(&mut self, table: &Table) -> Result<Vec<String>, RetrievalError> {
        let rows = self
            .client
            .query(
                "SELECT kcu.column_name::text
                   FROM information_schema.table_constraints tc
                   JOIN information_schema.key_column_usage kcu
                     ON tc.constraint_name = kcu.constraint_name
                    AND tc.table_schema = kcu.table_schema
                    AND tc.table_name = kcu.table_name
                  WHERE tc.constraint_type = 'PRIMARY KEY'
                    AND tc.table_schema = $1 AND tc.table_name = $2
                  ORDER BY kcu.ordinal_position",
                &[&table.schema, &table.name],
            )
            .map_err(classify_error)?;
        Ok(rows.iter().map(|r| r.get(0)).collect())
    }

    /// SQL ordering and reference expressions: the primary key when there is one, else `ctid`.
    fn reference_sql(pk: &[String]) -> (String, String) {
        if pk.is_empty() {
            ("t.ctid".into(), "'ctid:' || t.ctid::text".into())
        } else {
            let cols: Vec<String> = pk.iter().map(|c| format!("t.{}", quote_ident(c))).collect();
            let text: Vec<String> = cols.iter().map(|c| format!("{c}::text")).collect();
            (cols.join(", "), format!("concat_ws(',', {})", text.join(", ")))
        }
    }
}

impl Session for PostgresSession {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            in_place_regex: true,
            exact_count: true,
        }
    }

    fn list_collections(&mut self) -> Result<Vec<String>, RetrievalError> {
        let rows = self
            .client
            .query(
                "SELECT table_schema::text, table_name::text
                   FROM information_schema.tables
                  WHERE table_type = 'BASE TABLE'
                    AND table_schema NOT IN ('pg_catalog', 'information_schema')
                  ORDER BY 1, 2",
                &[],
            )
            .map_err(classify_error)?;
        Ok(rows
            .iter()
            .map(|r| format!("{}.{}", r.get::<_, String>(0), r.get::<_, String>(1)))
            .collect())
    }

    fn profile(&mut self, collection: &str, sampling: &SamplingConfig) -> Result<CollectionProfile, RetrievalError> {
        let table = Table::parse(collection)?;
        let columns = self
            .client
            .query(
                "SELECT column_name::text, data_type::text, udt_name::text
                   FROM information_schema.columns
                  WHERE table_schema = $1 AND table_name = $2
                  ORDER BY ordinal_position",
                &[&table.schema, &table.name],
            )
            .map_err(classify_error)?;
        if columns.is_empty() {
            return Err(RetrievalError::NotFound(collection.to_string()));
        }
        let attributes: Vec<AttributeMeta> = columns
            .iter()
            .map(|r| {
                let data_type: String = r.get(1);
                let declared = if data_type == "USER-DEFINED" { r.get(2) } else { data_type };
                AttributeMeta::new(r.get::<_, String>(0), declared)
            })
            .collect();
        let pk = self.primary_key(&table)?;

        let count: i64 = self
            .client
            .query_one(&format!("SELECT count(*) FROM {}", table.sql()), &[])
            .map_err(classify_error)?
            .get(0);

        let (order, reference) = Self::reference_sql(&pk);
        let limit = i64::try_from(sampling.limit).unwrap_or(i64::MAX);
        let rows = self
            .client
            .query(
                &format!(
                    "SELECT {reference}, to_jsonb(t)::text FROM {} t ORDER BY {order} LIMIT $1",
                    table.sql()
                ),
                &[&limit],
            )
            .map_err(classify_error)?;
        let mut sample = Vec::with_capacity(rows.len());
        for row in rows {
            let json: String = row.get(1);
            let values: BTreeMap<String, Value> = serde_json::from_str(&json)
                .map_err(|e| RetrievalError::Query(format!("row of {collection}: {e}")))?;
            sample.push(Entity {
                reference: row.get(0),
                values,
            });
        }

        Ok(CollectionProfile {
            storage_ref: self.storage_ref.clone(),
            collection: collection.to_string(),
            attributes,
            entity_count: count.max(0) as u64,
            count_estimated: false,
            primary_key: (!pk.is_empty()).then(|| pk.join(",")),
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
        let regex = pattern
            .translate(Dialect::Postgres)
            .map_err(RetrievalError::PatternUnsupported)?;
        let table = Table::parse(collection)?;
        let pk = self.primary_key(&table)?;
        let column = format!("t.{}", quote_ident(attribute));
        let count: i64 = self
            .client
            .query_one(
                &format!("SELECT count(*) FROM {} t WHERE {column}::text ~ $1", table.sql()),
                &[&regex],
            )
            .map_err(classify_error)?
            .get(0);
        let (order, reference) = Self::reference_sql(&pk);
        let cap = i64::try_from(reference_cap).unwrap_or(i64::MAX);
        let references = self
            .client
            .query(
                &format!(
                    "SELECT {reference} FROM {} t WHERE {column}::text ~ $1 ORDER BY {order} LIMIT $2",
                    table.sql()
                ),
                &[&regex, &cap],
            )
            .map_err(classify_error)?
            .iter()
            .map(|r| r.get(0))
            .collect();
        Ok(InPlaceMatch {
            count: count.max(0) as u64,
            references,
        })
    }
}
