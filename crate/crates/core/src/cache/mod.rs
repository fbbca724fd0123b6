//! The cache interface used for both revision counters and cached results.
//!
//! `add` and `increment` are atomic read-modify-write operations; `multiget`
//! is positionally aligned with its input but not atomic across keys. A miss
//! (`None`) is an ordinary outcome and is distinct from an I/O failure.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod contract;
pub mod fake_server;
pub mod inflight;
pub mod memcached;
pub mod memory;

pub use memcached::MemcachedCache;
pub use memory::{CacheConfig, EvictionOutcome, MemoryCache, ShadowLedger};

/// Longest key accepted by the memcached text protocol.
pub const MAX_KEY_LEN: usize = 250;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("invalid cache key: {0}")]
    InvalidKey(#[from] KeyError),
    #[error("stored value is not an unsigned decimal integer")]
    NonNumeric,
    #[error("cache I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache protocol error: {0}")]
    Protocol(String),
}

impl CacheError {
    /// Failures of the transport rather than of the request itself.
    pub fn is_io(&self) -> bool {
        matches!(self, CacheError::Io(_) | CacheError::Protocol(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("key is empty")]
    Empty,
    #[error("key is {0} bytes, limit is 250")]
    TooLong(usize),
    #[error("key contains whitespace or control byte 0x{0:02x}")]
    BadByte(u8),
}

/// A memcached-compatible key: 1..=250 bytes, no whitespace or control bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(key: impl Into<String>) -> Result<Self, KeyError> {
        let key = key.into();
        if key.is_empty() {
            return Err(KeyError::Empty);
        }
        if key.len() > MAX_KEY_LEN {
            return Err(KeyError::TooLong(key.len()));
        }
        if let Some(&b) = key.as_bytes().iter().find(|&&b| b <= b' ' || b == 0x7f) {
            return Err(KeyError::BadByte(b));
        }
        Ok(CacheKey(key))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for CacheKey {
    type Error = KeyError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        CacheKey::new(value)
    }
}

impl From<CacheKey> for String {
    fn from(key: CacheKey) -> Self {
        key.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type CacheValue = Vec<u8>;

pub trait Cache: Send + Sync {
    fn get(&self, key: &CacheKey) -> Result<Option<CacheValue>, CacheError>;

    fn multiget(&self, keys: &[CacheKey]) -> Result<Vec<Option<CacheValue>>, CacheError> {
        keys.iter().map(|k| self.get(k)).collect()
    }

    /// Always succeeds unless the transport fails.
    fn set(&self, key: &CacheKey, value: &[u8]) -> Result<(), CacheError>;

    /// Stores `value` only if `key` is absent; returns whether it did.
    fn add(&self, key: &CacheKey, value: &[u8]) -> Result<bool, CacheError>;

    /// Adds one to a present decimal value and returns the result. A missing
    /// key yields `None` and is not created.
    fn increment(&self, key: &CacheKey) -> Result<Option<u64>, CacheError>;

    /// Removes `key`; returns whether it was present.
    fn delete(&self, key: &CacheKey) -> Result<bool, CacheError>;

    /// Drops every key. Only the flush-everything baseline uses this.
    fn flush_all(&self) -> Result<(), CacheError>;
}

pub(crate) fn parse_counter(value: &[u8]) -> Result<u64, CacheError> {
    let text = std::str::from_utf8(value).map_err(|_| CacheError::NonNumeric)?;
    let text = text.trim_end_matches([' ', '\r', '\n']);
    if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CacheError::NonNumeric);
    }
    text.parse().map_err(|_| CacheError::NonNumeric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_validation() {
        assert!(CacheKey::new("rev:*|?|?").is_ok());
        assert_eq!(CacheKey::new(""), Err(KeyError::Empty));
        assert_eq!(CacheKey::new("a b"), Err(KeyError::BadByte(b' ')));
        assert_eq!(CacheKey::new("a\nb"), Err(KeyError::BadByte(b'\n')));
        assert_eq!(CacheKey::new("a\x7f"), Err(KeyError::BadByte(0x7f)));
        assert!(CacheKey::new("x".repeat(250)).is_ok());
        assert_eq!(CacheKey::new("x".repeat(251)), Err(KeyError::TooLong(251)));
        assert!(CacheKey::new("zażółć").is_ok());
    }

    #[test]
    fn counters_parse_strictly() {
        assert_eq!(parse_counter(b"42").unwrap(), 42);
        assert_eq!(parse_counter(b"18446744073709551615").unwrap(), u64::MAX);
        assert!(parse_counter(b"18446744073709551616").is_err());
        assert!(parse_counter(b"-1").is_err());
        assert!(parse_counter(b"").is_err());
        assert!(parse_counter(b"1.5").is_err());
    }
}
