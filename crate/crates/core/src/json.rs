//! Canonical JSON: object keys sorted, compact separators, shortest round-trip floats.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Result;

/// Compact canonical encoding. Keys come out sorted because `serde_json::Map` is a
/// `BTreeMap` in this build.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

/// Indented canonical encoding, used for files meant to be read by people.
pub fn to_canonical_pretty<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
