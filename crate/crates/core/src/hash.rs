//! Content hashing for manifests and parameter-freeze checks.

use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a value's JSON encoding. Struct fields serialize in declaration
/// order and no hashed value contains a map, so equal values hash equally.
pub fn json_hash<T: serde::Serialize>(value: &T) -> crate::Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(value)?))
}
