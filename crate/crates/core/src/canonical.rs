//! Canonical JSON: object keys sorted, no insignificant whitespace.
//!
//! Used for golden output and as the byte string hashed by bid commitments.

use serde::Serialize;

pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    // serde_json's Map is ordered by key unless `preserve_order` is enabled
    let value = serde_json::to_value(value)?;
    serde_json::to_string(&value)
}

pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    to_canonical_json(value).map(String::into_bytes)
}
