//! Which revision counters a select reads and a write increments.

use std::fmt::Debug;

use thiserror::Error;

use crate::model::{ModelError, Pattern, Query, Schema};
use crate::variants::{read_variants, write_variants};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("query {query} matches no whitelisted {side} template")]
    WhitelistViolation { query: String, side: &'static str },
    #[error("projection drops constrained column {column} of {query}")]
    DroppedConstraint { query: String, column: usize },
}

pub trait DependencyScheme: Send + Sync + Debug {
    /// Patterns whose revisions make up the version of a select on `q`.
    fn probe_patterns(&self, q: &Query) -> Result<Vec<Pattern>, SchemeError>;
    /// Patterns incremented after a write to `q`.
    fn increment_patterns(&self, q: &Query) -> Result<Vec<Pattern>, SchemeError>;
}

/// The untrimmed graph: all read and write variants.
#[derive(Debug, Clone)]
pub struct FullScheme {
    schema: Schema,
}

impl FullScheme {
    pub fn new(schema: Schema) -> Self {
        FullScheme { schema }
    }
}

impl DependencyScheme for FullScheme {
    fn probe_patterns(&self, q: &Query) -> Result<Vec<Pattern>, SchemeError> {
        self.schema.check(q)?;
        Ok(read_variants(q))
    }

    fn increment_patterns(&self, q: &Query) -> Result<Vec<Pattern>, SchemeError> {
        self.schema.check(q)?;
        Ok(write_variants(q))
    }
}
