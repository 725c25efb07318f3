//! Canonical object encoding shared by every document the crate reads or
//! writes: UTF-8 JSON, object keys sorted lexicographically, no insignificant
//! whitespace. Array ordering is owned by the typed models that produce them.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Serializes `value` to canonical bytes.
///
/// Going through `serde_json::Value` sorts every object's keys, since the
/// default map type is a `BTreeMap`.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let tree = serde_json::to_value(value).expect("model types serialize infallibly");
    serde_json::to_vec(&tree).expect("json values serialize infallibly")
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> String {
    String::from_utf8(to_canonical_bytes(value)).expect("serde_json emits utf-8")
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

pub fn canonical_hash<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(to_canonical_bytes(value))
}

pub fn is_sha256_hex(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}
