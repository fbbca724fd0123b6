//! Cache key formats. These are a wire contract: independent front-ends must
//! derive identical keys for identical patterns and queries.

use sha2::{Digest, Sha256};

use crate::cache::{CacheKey, KeyError, MAX_KEY_LEN};
use crate::model::{Pattern, PatternToken, Query, QueryToken};

pub const REVISION_PREFIX: &str = "rev:";
pub const FOLDED_PREFIX: &str = "rev#";
pub const RESULT_PREFIX: &str = "res:";

fn escape_into(out: &mut String, bytes: &[u8]) {
    for &b in bytes {
        if b == b'%' || b == b'|' || b == b' ' || !(0x20..0x7f).contains(&b) {
            out.push_str(&format!("%{b:02X}"));
        } else {
            out.push(b as char);
        }
    }
}

/// The unfolded encoding; may exceed the key length limit.
pub fn revision_key_text(p: &Pattern) -> String {
    let mut out = String::from(REVISION_PREFIX);
    for (i, t) in p.tokens().iter().enumerate() {
        if i > 0 {
            out.push('|');
        }
        match t {
            PatternToken::Star => out.push('*'),
            PatternToken::QMark => out.push('?'),
            PatternToken::Percent => out.push('%'),
            PatternToken::Value(v) => {
                out.push('v');
                escape_into(&mut out, v.as_bytes());
            }
        }
    }
    out
}

/// Strict encoding: fails when the key would be longer than memcached allows.
pub fn revision_key(p: &Pattern) -> Result<CacheKey, KeyError> {
    CacheKey::new(revision_key_text(p))
}

/// Like [`revision_key`], but long encodings are replaced by a digest.
pub fn revision_key_folded(p: &Pattern) -> CacheKey {
    let text = revision_key_text(p);
    if text.len() <= MAX_KEY_LEN {
        if let Ok(key) = CacheKey::new(text.clone()) {
            return key;
        }
    }
    let folded = format!("{FOLDED_PREFIX}{}", hex::encode(Sha256::digest(text.as_bytes())));
    CacheKey::new(folded).expect("folded key is short and printable")
}

fn frame(hasher: &mut Sha256, bytes: &[u8]) {
    hasher.update((bytes.len() as u64).to_be_bytes());
    hasher.update(bytes);
}

fn hash_query(hasher: &mut Sha256, q: &Query) {
    hasher.update((q.tokens().len() as u64).to_be_bytes());
    for t in q.tokens() {
        match t {
            QueryToken::Star => hasher.update([0u8]),
            QueryToken::Value(v) => {
                hasher.update([1u8]);
                frame(hasher, v.as_bytes());
            }
        }
    }
}

/// Result key for a query plus free-form text (ordering, limits, projection)
/// that distinguishes queries scanning the same subspace.
pub fn digest(q: &Query, extra: &str) -> CacheKey {
    digest_clauses(std::slice::from_ref(q), extra)
}

/// Result key for a disjunction of clauses.
pub fn digest_clauses(clauses: &[Query], extra: &str) -> CacheKey {
    let mut hasher = Sha256::new();
    hasher.update((clauses.len() as u64).to_be_bytes());
    for q in clauses {
        hash_query(&mut hasher, q);
    }
    frame(&mut hasher, extra.as_bytes());
    let key = format!("{RESULT_PREFIX}{}", hex::encode(hasher.finalize()));
    CacheKey::new(key).expect("digest key is short and printable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FieldValue;
    use std::collections::HashSet;

    fn p(s: &str) -> Pattern {
        s.parse().unwrap()
    }

    #[test]
    fn basic_encodings() {
        assert_eq!(revision_key(&p("*,?,?")).unwrap().as_str(), "rev:*|?|?");
        let pipe = Pattern::new(vec![PatternToken::Value("a|b".into())]);
        assert_eq!(revision_key(&pipe).unwrap().as_str(), "rev:va%7Cb");
        assert_eq!(revision_key(&p("1,%,%")).unwrap().as_str(), "rev:v1|%|%");
    }

    #[test]
    fn injective_over_small_alphabet() {
        let values = ["", "*", "|", "x"];
        let mut tokens: Vec<PatternToken> = vec![PatternToken::Star, PatternToken::QMark, PatternToken::Percent];
        tokens.extend(values.iter().map(|v| PatternToken::Value(FieldValue::new(*v))));
        let mut patterns = vec![Pattern::new(vec![])];
        for k in 1..=2 {
            let mut layer = vec![Vec::new()];
            for _ in 0..k {
                layer = layer
                    .into_iter()
                    .flat_map(|prefix: Vec<PatternToken>| {
                        tokens.iter().map(move |t| {
                            let mut v = prefix.clone();
                            v.push(t.clone());
                            v
                        })
                    })
                    .collect();
            }
            patterns.extend(layer.into_iter().map(Pattern::new));
        }
        let keys: HashSet<String> = patterns.iter().map(revision_key_text).collect();
        assert_eq!(keys.len(), patterns.len());
    }

    #[test]
    fn long_keys_fold() {
        let long = Pattern::new(vec![PatternToken::Value("x".repeat(300).into())]);
        assert!(revision_key(&long).is_err());
        let folded = revision_key_folded(&long);
        assert!(folded.as_str().starts_with(FOLDED_PREFIX));
        assert_eq!(folded.as_str().len(), 4 + 64);
        assert_eq!(revision_key_folded(&p("1,*")).as_str(), "rev:v1|*");
    }

    #[test]
    fn digest_separates_extra_text() {
        let q: Query = "1,*".parse().unwrap();
        let a = digest(&q, "ORDER BY x");
        assert_eq!(a, digest(&q, "ORDER BY x"));
        assert_ne!(a, digest(&q, "ORDER BY y"));
        assert_ne!(a, digest(&"2,*".parse().unwrap(), "ORDER BY x"));
        assert!(a.as_str().starts_with("res:"));
        assert_eq!(a.as_str().len(), 4 + 64);
        assert_ne!(digest(&q, ""), digest_clauses(&[q.clone(), q.clone()], ""));
    }
}
