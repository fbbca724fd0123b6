//! Records, queries and revision patterns over a k-dimensional table.
//!
//! A record is a point; a query is an axis-aligned box where `*` leaves a
//! column unconstrained. Patterns are the identifiers of revision counters
//! and additionally use `?` ("some particular value") and `%` (a collapsed
//! ancestor counter, only meaningful for dyadic range columns).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("token `%` is only valid inside a dyadic key set")]
    UnsupportedToken,
    #[error("column {column} has no configured minimal value")]
    NoMinimum { column: usize },
    #[error("schema needs at least one column")]
    EmptySchema,
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("cannot parse `{input}`: {reason}")]
    Parse { input: String, reason: String },
}

/// A serialized column value. Only equality matters, so every column type is
/// represented by its string form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldValue(String);

impl FieldValue {
    pub fn new(value: impl Into<String>) -> Self {
        FieldValue(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl fmt::Display for FieldValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FieldValue {
    fn from(value: &str) -> Self {
        FieldValue(value.to_owned())
    }
}

impl From<String> for FieldValue {
    fn from(value: String) -> Self {
        FieldValue(value)
    }
}

macro_rules! field_from_int {
    ($($t:ty),*) => {$(
        impl From<$t> for FieldValue {
            fn from(value: $t) -> Self {
                FieldValue(value.to_string())
            }
        }
    )*};
}
field_from_int!(u8, u16, u32, u64, usize, i32, i64);

/// Column layout of the single table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<String>,
    minimums: Vec<Option<FieldValue>>,
}

impl Schema {
    pub fn new<I, S>(columns: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let columns: Vec<String> = columns.into_iter().map(Into::into).collect();
        if columns.is_empty() {
            return Err(ModelError::EmptySchema);
        }
        for (i, name) in columns.iter().enumerate() {
            if columns[..i].contains(name) {
                return Err(ModelError::DuplicateColumn(name.clone()));
            }
        }
        let minimums = vec![None; columns.len()];
        Ok(Schema { columns, minimums })
    }

    /// Schema with `k` columns named `c0..c{k-1}`, all with minimal value `"0"`.
    pub fn numeric(k: usize) -> Result<Self, ModelError> {
        let schema = Schema::new((0..k).map(|i| format!("c{i}")))?;
        Ok(schema.with_minimums(vec![FieldValue::from(0u32); k]))
    }

    /// Sets the per-column value used for unconstrained positions of a witness.
    pub fn with_minimums(mut self, minimums: Vec<FieldValue>) -> Self {
        assert_eq!(minimums.len(), self.columns.len(), "one minimum per column");
        self.minimums = minimums.into_iter().map(Some).collect();
        self
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn minimum(&self, column: usize) -> Option<&FieldValue> {
        self.minimums.get(column).and_then(Option::as_ref)
    }

    pub fn check<T: Dimensioned + ?Sized>(&self, item: &T) -> Result<(), ModelError> {
        check_len(self.k(), item.dim())
    }
}

/// Anything whose length must agree with the schema.
pub trait Dimensioned {
    fn dim(&self) -> usize;
}

fn check_len(expected: usize, actual: usize) -> Result<(), ModelError> {
    if expected == actual {
        Ok(())
    } else {
        Err(ModelError::Dimension { expected, actual })
    }
}

/// A table row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Record(Vec<FieldValue>);

impl Record {
    pub fn new(fields: Vec<FieldValue>) -> Self {
        Record(fields)
    }

    pub fn fields(&self) -> &[FieldValue] {
        &self.0
    }

    /// The query whose subspace is exactly this record.
    pub fn to_query(&self) -> Query {
        Query(self.0.iter().cloned().map(QueryToken::Value).collect())
    }
}

impl Dimensioned for Record {
    fn dim(&self) -> usize {
        self.0.len()
    }
}

impl<V: Into<FieldValue>> FromIterator<V> for Record {
    fn from_iter<I: IntoIterator<Item = V>>(iter: I) -> Self {
        Record(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryToken {
    Value(FieldValue),
    Star,
}

impl QueryToken {
    pub fn is_star(&self) -> bool {
        matches!(self, QueryToken::Star)
    }

    pub fn value(&self) -> Option<&FieldValue> {
        match self {
            QueryToken::Value(v) => Some(v),
            QueryToken::Star => None,
        }
    }
}

/// The bounding box of a read or write: one token per column.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Query(Vec<QueryToken>);

impl Query {
    pub fn new(tokens: Vec<QueryToken>) -> Self {
        Query(tokens)
    }

    pub fn all_stars(k: usize) -> Self {
        Query(vec![QueryToken::Star; k])
    }

    pub fn tokens(&self) -> &[QueryToken] {
        &self.0
    }

    /// Number of non-star positions, i.e. the number of equality constraints.
    pub fn constrained(&self) -> usize {
        self.0.iter().filter(|t| !t.is_star()).count()
    }

    /// Whether `record` lies in the subspace of this query.
    pub fn contains(&self, record: &Record) -> Result<bool, ModelError> {
        check_len(self.0.len(), record.dim())?;
        Ok(self.contains_unchecked(record))
    }

    pub(crate) fn contains_unchecked(&self, record: &Record) -> bool {
        self.0.iter().zip(record.fields()).all(|(t, v)| match t {
            QueryToken::Star => true,
            QueryToken::Value(q) => q == v,
        })
    }

    /// Subspaces are disjoint exactly when some position holds two different
    /// non-star values.
    pub fn intersects(&self, other: &Query) -> Result<bool, ModelError> {
        check_len(self.0.len(), other.0.len())?;
        Ok(self.0.iter().zip(&other.0).all(|(a, b)| match (a, b) {
            (QueryToken::Value(x), QueryToken::Value(y)) => x == y,
            _ => true,
        }))
    }

    /// A record lying in both subspaces, built position by position; columns
    /// unconstrained by both queries take the schema's minimal value.
    pub fn witness(&self, other: &Query, schema: &Schema) -> Result<Option<Record>, ModelError> {
        schema.check(self)?;
        schema.check(other)?;
        if !self.intersects(other)? {
            return Ok(None);
        }
        let mut fields = Vec::with_capacity(self.0.len());
        for (i, (a, b)) in self.0.iter().zip(&other.0).enumerate() {
            let v = match (a, b) {
                (QueryToken::Value(v), _) | (QueryToken::Star, QueryToken::Value(v)) => v.clone(),
                (QueryToken::Star, QueryToken::Star) => {
                    schema.minimum(i).cloned().ok_or(ModelError::NoMinimum { column: i })?
                }
            };
            fields.push(v);
        }
        Ok(Some(Record(fields)))
    }
}

impl Dimensioned for Query {
    fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PatternToken {
    Value(FieldValue),
    Star,
    QMark,
    Percent,
}

impl From<&QueryToken> for PatternToken {
    fn from(token: &QueryToken) -> Self {
        match token {
            QueryToken::Value(v) => PatternToken::Value(v.clone()),
            QueryToken::Star => PatternToken::Star,
        }
    }
}

/// Identifier of one revision counter in the middle layer.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pattern(Vec<PatternToken>);

impl Pattern {
    pub fn new(tokens: Vec<PatternToken>) -> Self {
        Pattern(tokens)
    }

    pub fn tokens(&self) -> &[PatternToken] {
        &self.0
    }

    pub fn has_percent(&self) -> bool {
        self.0.contains(&PatternToken::Percent)
    }
}

impl Dimensioned for Pattern {
    fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<&Query> for Pattern {
    fn from(q: &Query) -> Self {
        Pattern(q.0.iter().map(PatternToken::from).collect())
    }
}

/// E′: the write query `q` increments counter `p`.
///
/// Per position, `p` keeps the query's token, replaces a value with `*`, or
/// replaces a `*` with `?`.
pub fn write_edge(q: &Query, p: &Pattern) -> Result<bool, ModelError> {
    check_len(q.dim(), p.dim())?;
    if p.has_percent() {
        return Err(ModelError::UnsupportedToken);
    }
    Ok(q.0.iter().zip(&p.0).all(|(qt, pt)| match (qt, pt) {
        (QueryToken::Value(a), PatternToken::Value(b)) => a == b,
        (QueryToken::Value(_), PatternToken::Star) => true,
        (QueryToken::Star, PatternToken::Star | PatternToken::QMark) => true,
        _ => false,
    }))
}

/// E″: the read query `q` depends on counter `p`.
///
/// Per position, `p` equals the query's token or holds `?` where the query
/// holds a value.
pub fn read_edge(p: &Pattern, q: &Query) -> Result<bool, ModelError> {
    check_len(q.dim(), p.dim())?;
    if p.has_percent() {
        return Err(ModelError::UnsupportedToken);
    }
    Ok(p.0.iter().zip(&q.0).all(|(pt, qt)| match (pt, qt) {
        (PatternToken::Value(a), QueryToken::Value(b)) => a == b,
        (PatternToken::Star, QueryToken::Star) => true,
        (PatternToken::QMark, QueryToken::Value(_)) => true,
        _ => false,
    }))
}

// Text forms: comma separated tokens, optionally parenthesized, e.g. `(2,*,?)`.
// A value equal to one of the placeholder symbols cannot be written this way.

fn split_tokens(input: &str) -> Vec<&str> {
    let trimmed = input.trim();
    let inner = trimmed
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .unwrap_or(trimmed);
    if inner.trim().is_empty() {
        return Vec::new();
    }
    inner.split(',').map(str::trim).collect()
}

impl FromStr for Record {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens = split_tokens(s);
        if let Some(bad) = tokens.iter().find(|t| matches!(**t, "*" | "?" | "%")) {
            return Err(ModelError::Parse {
                input: s.to_owned(),
                reason: format!("placeholder `{bad}` is not allowed in a record"),
            });
        }
        Ok(tokens.into_iter().collect())
    }
}

impl FromStr for Query {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        split_tokens(s)
            .into_iter()
            .map(|t| match t {
                "*" => Ok(QueryToken::Star),
                "?" | "%" => Err(ModelError::Parse {
                    input: s.to_owned(),
                    reason: format!("placeholder `{t}` is not allowed in a query"),
                }),
                v => Ok(QueryToken::Value(v.into())),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Query)
    }
}

impl FromStr for Pattern {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Pattern(
            split_tokens(s)
                .into_iter()
                .map(|t| match t {
                    "*" => PatternToken::Star,
                    "?" => PatternToken::QMark,
                    "%" => PatternToken::Percent,
                    v => PatternToken::Value(v.into()),
                })
                .collect(),
        ))
    }
}

fn write_tuple<T>(f: &mut fmt::Formatter<'_>, items: &[T], each: impl Fn(&T) -> String) -> fmt::Result {
    f.write_str("(")?;
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        f.write_str(&each(item))?;
    }
    f.write_str(")")
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.0, |v| v.to_string())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.0, |t| match t {
            QueryToken::Value(v) => v.to_string(),
            QueryToken::Star => "*".into(),
        })
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.0, |t| match t {
            PatternToken::Value(v) => v.to_string(),
            PatternToken::Star => "*".into(),
            PatternToken::QMark => "?".into(),
            PatternToken::Percent => "%".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Query {
        s.parse().unwrap()
    }

    fn p(s: &str) -> Pattern {
        s.parse().unwrap()
    }

    fn r(s: &str) -> Record {
        s.parse().unwrap()
    }

    #[test]
    fn contains_examples() {
        assert!(q("2,*,*").contains(&r("2,5,7")).unwrap());
        assert!(!q("2,*,*").contains(&r("3,5,7")).unwrap());
        assert!(q("*,*,*").contains(&r("9,9,9")).unwrap());
        assert_eq!(
            q("2,*").contains(&r("2,5,7")),
            Err(ModelError::Dimension { expected: 2, actual: 3 })
        );
    }

    #[test]
    fn intersects_examples() {
        assert!(q("U,*,*").intersects(&q("*,G,D")).unwrap());
        assert!(!q("1,2").intersects(&q("1,3")).unwrap());
        assert!(q("1,2").intersects(&q("1,2,3")).is_err());
    }

    #[test]
    fn witness_examples() {
        let schema = Schema::numeric(2).unwrap();
        assert_eq!(q("1,*").witness(&q("*,2"), &schema).unwrap(), Some(r("1,2")));
        assert_eq!(q("*,*").witness(&q("*,*"), &schema).unwrap(), Some(r("0,0")));
        assert_eq!(q("1,2").witness(&q("1,3"), &schema).unwrap(), None);
    }

    #[test]
    fn witness_without_minimum_fails_only_when_needed() {
        let schema = Schema::new(["a", "b"]).unwrap();
        assert_eq!(q("1,*").witness(&q("*,2"), &schema).unwrap(), Some(r("1,2")));
        assert_eq!(
            q("1,*").witness(&q("1,*"), &schema),
            Err(ModelError::NoMinimum { column: 1 })
        );
    }

    #[test]
    fn write_edge_examples() {
        assert!(write_edge(&q("U,*,*"), &p("*,?,?")).unwrap());
        assert!(!write_edge(&q("U,*,*"), &p("?,*,*")).unwrap());
        assert!(write_edge(&q("1,2,3"), &p("1,2,3")).unwrap());
        assert_eq!(write_edge(&q("1,*"), &p("1,%")), Err(ModelError::UnsupportedToken));
    }

    #[test]
    fn read_edge_examples() {
        assert!(read_edge(&p("*,?,1"), &q("*,0,1")).unwrap());
        assert!(read_edge(&p("*,?,1"), &q("*,2,1")).unwrap());
        assert!(!read_edge(&p("*,?,1"), &q("*,*,1")).unwrap());
        assert!(read_edge(&p("4,5"), &q("4,5")).unwrap());
        assert_eq!(read_edge(&p("%"), &q("1")), Err(ModelError::UnsupportedToken));
    }

    #[test]
    fn schema_rejects_bad_layouts() {
        assert_eq!(Schema::new(Vec::<String>::new()), Err(ModelError::EmptySchema));
        assert_eq!(Schema::new(["a", "a"]), Err(ModelError::DuplicateColumn("a".into())));
    }

    #[test]
    fn text_forms_round_trip() {
        for s in ["(2,*,?)", "(%,1)", "()"] {
            assert_eq!(p(s).to_string(), s);
        }
        assert!("1,?".parse::<Query>().is_err());
        assert!("1,*".parse::<Record>().is_err());
    }
}
