//! Framing of cached select results.
//!
//! ```text
//! gke1 v=<dotted version> s=<snapshot seq or -> n=<rows> b=<body bytes>\n
//! <row>*        row   = <len>:<field>*   field = <len>:<bytes>
//! ```
//! Anything that does not parse exactly, including trailing bytes, is
//! rejected so a torn or foreign value reads as a miss.

use thiserror::Error;

use super::version::Version;
use crate::model::{FieldValue, Record};

const MAGIC: &str = "gke1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedEntry {
    pub version: Version,
    /// Table sequence number the rows reflect; only recorded when configured.
    pub snapshot: Option<u64>,
    pub rows: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed cached entry: {0}")]
pub struct DecodeError(&'static str);

fn push_framed(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(bytes.len().to_string().as_bytes());
    out.push(b':');
    out.extend_from_slice(bytes);
}

impl CachedEntry {
    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let mut row = Vec::new();
        for r in &self.rows {
            row.clear();
            for f in r.fields() {
                push_framed(&mut row, f.as_bytes());
            }
            push_framed(&mut body, &row);
        }
        let snapshot = self.snapshot.map_or_else(|| "-".to_owned(), |s| s.to_string());
        let mut out = format!(
            "{MAGIC} v={} s={snapshot} n={} b={}\n",
            self.version,
            self.rows.len(),
            body.len()
        )
        .into_bytes();
        out.extend_from_slice(&body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<CachedEntry, DecodeError> {
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or(DecodeError("no header"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| DecodeError("header not UTF-8"))?;
        let body = &bytes[nl + 1..];
        let mut parts = header.split(' ');
        if parts.next() != Some(MAGIC) {
            return Err(DecodeError("bad magic"));
        }
        let mut field = |name: &'static str| {
            parts
                .next()
                .and_then(|p| p.strip_prefix(name))
                .ok_or(DecodeError("missing header field"))
        };
        let version: Version = field("v=")?.parse().map_err(|_| DecodeError("bad version"))?;
        let snapshot = match field("s=")? {
            "-" => None,
            s => Some(s.parse().map_err(|_| DecodeError("bad snapshot"))?),
        };
        let n: usize = field("n=")?.parse().map_err(|_| DecodeError("bad row count"))?;
        let len: usize = field("b=")?.parse().map_err(|_| DecodeError("bad body length"))?;
        if parts.next().is_some() {
            return Err(DecodeError("trailing header fields"));
        }
        if body.len() != len {
            return Err(DecodeError("body length mismatch"));
        }
        let mut rest = body;
        let mut rows = Vec::with_capacity(n.min(body.len()));
        for _ in 0..n {
            let (row, tail) = take_framed(rest)?;
            rest = tail;
            let mut fields = Vec::new();
            let mut fr = row;
            while !fr.is_empty() {
                let (f, tail) = take_framed(fr)?;
                fr = tail;
                let s = std::str::from_utf8(f).map_err(|_| DecodeError("field not UTF-8"))?;
                fields.push(FieldValue::new(s));
            }
            rows.push(Record::new(fields));
        }
        if !rest.is_empty() {
            return Err(DecodeError("trailing body bytes"));
        }
        Ok(CachedEntry {
            version,
            snapshot,
            rows,
        })
    }
}

fn take_framed(input: &[u8]) -> Result<(&[u8], &[u8]), DecodeError> {
    let colon = input
        .iter()
        .take(21)
        .position(|&b| b == b':')
        .ok_or(DecodeError("missing length prefix"))?;
    let digits = &input[..colon];
    if digits.is_empty() || !digits.iter().all(u8::is_ascii_digit) {
        return Err(DecodeError("bad length prefix"));
    }
    let len: usize = std::str::from_utf8(digits)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(DecodeError("bad length prefix"))?;
    let rest = &input[colon + 1..];
    if rest.len() < len {
        return Err(DecodeError("truncated frame"));
    }
    Ok(rest.split_at(len))
}
