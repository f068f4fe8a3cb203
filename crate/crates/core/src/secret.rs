use std::fmt;
use std::path::PathBuf;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

const PRESENT: &str = "present";

/// A credential. Literal values live in memory only: serializing one yields
/// the marker `"present"`, which deserializes back as [`Secret::Redacted`].
/// Env and file references serialize as `{"env": NAME}` / `{"file": PATH}`.
#[derive(Clone, PartialEq, Eq)]
pub enum Secret {
    Literal(String),
    Redacted,
    Env(String),
    File(PathBuf),
}

#[derive(Debug, thiserror::Error)]
pub enum SecretError {
    #[error("secret value is not available in this process (only its presence was recorded)")]
    Redacted,
    #[error("environment variable {0} is not set")]
    MissingEnv(String),
    #[error("cannot read secret file {path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Secret {
    pub fn literal(value: impl Into<String>) -> Self {
        Self::Literal(value.into())
    }

    /// Resolves the secret value. Only call this right before handing it to a client library.
    pub fn reveal(&self) -> Result<String, SecretError> {
        match self {
            Self::Literal(v) => Ok(v.clone()),
            Self::Redacted => Err(SecretError::Redacted),
            Self::Env(name) => std::env::var(name).map_err(|_| SecretError::MissingEnv(name.clone())),
            Self::File(path) => std::fs::read_to_string(path)
                .map(|s| s.trim_end_matches(['\r', '\n']).to_string())
                .map_err(|source| SecretError::File {
                    path: path.clone(),
                    source,
                }),
        }
    }

    pub fn is_reference(&self) -> bool {
        matches!(self, Self::Env(_) | Self::File(_))
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Literal(_) | Self::Redacted => f.write_str("Secret(present)"),
            Self::Env(name) => write!(f, "Secret(env:{name})"),
            Self::File(path) => write!(f, "Secret(file:{})", path.display()),
        }
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Literal(_) | Self::Redacted => f.write_str(PRESENT),
            Self::Env(name) => write!(f, "env:{name}"),
            Self::File(path) => write!(f, "file:{}", path.display()),
        }
    }
}

impl Serialize for Secret {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Self::Literal(_) | Self::Redacted => s.serialize_str(PRESENT),
            Self::Env(name) => {
                let mut map = s.serialize_map(Some(1))?;
                map.serialize_entry("env", name)?;
                map.end()
            }
            Self::File(path) => {
                let mut map = s.serialize_map(Some(1))?;
                map.serialize_entry("file", path)?;
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for Secret {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Marker(String),
            Env { env: String },
            File { file: PathBuf },
        }
        match Wire::deserialize(d)? {
            Wire::Marker(m) if m == PRESENT => Ok(Self::Redacted),
            Wire::Marker(_) => Err(de::Error::custom(
                "secrets must be given as {\"env\": NAME} or {\"file\": PATH}",
            )),
            Wire::Env { env } => Ok(Self::Env(env)),
            Wire::File { file } => Ok(Self::File(file)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_never_serializes_its_value() {
        let s = Secret::literal("hunter2");
        assert_eq!(serde_json::to_string(&s).unwrap(), "\"present\"");
        assert_eq!(format!("{s:?} {s}"), "Secret(present) present");
        let back: Secret = serde_json::from_str("\"present\"").unwrap();
        assert_eq!(back, Secret::Redacted);
        assert!(back.reveal().is_err());
    }

    #[test]
    fn references_round_trip() {
        for s in [Secret::Env("PG_PW".into()), Secret::File("/run/secrets/pg".into())] {
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<Secret>(&json).unwrap(), s);
        }
    }

    #[test]
    fn raw_strings_are_refused_on_input() {
        assert!(serde_json::from_str::<Secret>("\"hunter2\"").is_err());
    }

    #[test]
    fn file_secrets_drop_trailing_newline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pw");
        std::fs::write(&path, "s3cret\n").unwrap();
        assert_eq!(Secret::File(path).reveal().unwrap(), "s3cret");
    }
}
