//! Versioned JSON documents for fitted artifacts.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT: &str = "solarcast";
pub const VERSION: u32 = 1;

pub const NGBOOST_MODEL: &str = "ngboost_model";
pub const CALIBRATOR: &str = "calibrator";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a {FORMAT} document (format {0:?})")]
    WrongFormat(String),
    #[error("unsupported document version {0}")]
    UnsupportedVersion(u32),
    #[error("expected a {expected} document, found {found}")]
    WrongKind { expected: String, found: String },
}

#[derive(Serialize, Deserialize)]
struct Document<T> {
    format: String,
    version: u32,
    kind: String,
    body: T,
}

pub fn to_json<T: Serialize>(kind: &str, body: &T) -> Result<String, PersistError> {
    let doc = Document {
        format: FORMAT.to_string(),
        version: VERSION,
        kind: kind.to_string(),
        body,
    };
    Ok(serde_json::to_string(&doc)?)
}

pub fn from_json<T: DeserializeOwned>(kind: &str, text: &str) -> Result<T, PersistError> {
    let doc: Document<T> = serde_json::from_str(text)?;
    if doc.format != FORMAT {
        return Err(PersistError::WrongFormat(doc.format));
    }
    if doc.version != VERSION {
        return Err(PersistError::UnsupportedVersion(doc.version));
    }
    if doc.kind != kind {
        return Err(PersistError::WrongKind {
            expected: kind.to_string(),
            found: doc.kind,
        });
    }
    Ok(doc.body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_roundtrip_bit_exact() {
        let xs = vec![0.1 + 0.2, std::f64::consts::PI, 1e-300, -2.5e17, 5e-324];
        let text = to_json("numbers", &xs).unwrap();
        let back: Vec<f64> = from_json("numbers", &text).unwrap();
        for (a, b) in xs.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn kind_and_version_checked() {
        let text = to_json("a", &1u8).unwrap();
        assert!(matches!(from_json::<u8>("b", &text), Err(PersistError::WrongKind { .. })));
        let bumped = text.replace("\"version\":1", "\"version\":9");
        assert!(matches!(from_json::<u8>("a", &bumped), Err(PersistError::UnsupportedVersion(9))));
    }
}
