//! Planning-time reductions of the revision graph: projecting away columns
//! no query constrains, trimming counters against a whitelist of query
//! shapes, splitting disjunctions, and the dyadic scheme for integer ranges.

pub mod dnf;
pub mod dyadic;
pub mod project;
pub mod trim;
pub mod whitelist;

use thiserror::Error;

use crate::model::ModelError;

pub use dnf::{dnf_expand, DnfPlan};
pub use dyadic::{dyadic_cover, dyadic_incr_keys, dyadic_probe_keys, DyadicClause, DyadicKey, DyadicKeySet};
pub use project::{project, project_lossy, ProjectedScheme, Projection};
pub use trim::{trim, PatternTemplate, PlanDocument, SlotPattern, SlotToken, TemplateToken, TrimmedPlan};
pub use whitelist::{parse_whitelist, ColumnSpec, Whitelist};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("line {line}, column {column}: {message}")]
    Whitelist {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid projection: {0}")]
    Projection(String),
    #[error("range [{lo}, {hi}] is not within a {width}-bit domain")]
    Range { lo: u64, hi: u64, width: u32 },
    #[error("bit width {0} is outside 1..=32")]
    Width(u32),
    #[error("a disjunction needs at least one clause")]
    EmptyDisjunction,
}
