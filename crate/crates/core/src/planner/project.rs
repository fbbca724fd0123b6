//! Dropping columns that no query constrains.

use crate::cachedb::{DependencyScheme, SchemeError};
use crate::model::{ModelError, Pattern, Query, QueryToken, Schema};
use crate::variants::{read_variants, write_variants};

use super::PlanError;

/// Kept column indices, zero-based and strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    indices: Vec<usize>,
    k: usize,
}

impl Projection {
    pub fn new(indices: Vec<usize>, k: usize) -> Result<Self, PlanError> {
        if indices.is_empty() {
            return Err(PlanError::Projection("no columns kept".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PlanError::Projection("indices must be strictly increasing".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= k) {
            return Err(PlanError::Projection(format!(
                "column {bad} does not exist in a {k}-column schema"
            )));
        }
        Ok(Projection { indices, k })
    }

    pub fn identity(k: usize) -> Self {
        Projection {
            indices: (0..k).collect(),
            k,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Dimension of the unprojected space.
    pub fn source_k(&self) -> usize {
        self.k
    }

    fn check(&self, q: &Query) -> Result<(), ModelError> {
        if q.tokens().len() != self.k {
            return Err(ModelError::Dimension {
                expected: self.k,
                actual: q.tokens().len(),
            });
        }
        Ok(())
    }
}

/// Keeps the projected positions; fails if a dropped position is constrained.
pub fn project(q: &Query, proj: &Projection) -> Result<Query, SchemeError> {
    proj.check(q)?;
    if let Some(column) = (0..proj.k).find(|i| !proj.indices.contains(i) && !q.tokens()[*i].is_star()) {
        return Err(SchemeError::DroppedConstraint {
            query: q.to_string(),
            column,
        });
    }
    Ok(project_lossy(q, proj))
}

/// Keeps the projected positions unconditionally. The result's subspace
/// contains the projection of the original one.
pub fn project_lossy(q: &Query, proj: &Projection) -> Query {
    Query::new(
        proj.indices
            .iter()
            .map(|&i| q.tokens().get(i).cloned().unwrap_or(QueryToken::Star))
            .collect(),
    )
}

/// Revision scheme over the projected space. Reads must leave the dropped
/// columns unconstrained; writes are widened onto the kept columns.
#[derive(Debug, Clone)]
pub struct ProjectedScheme {
    projection: Projection,
}

impl ProjectedScheme {
    pub fn new(schema: &Schema, projection: Projection) -> Result<Self, PlanError> {
        if projection.k != schema.k() {
            return Err(PlanError::Projection(format!(
                "projection is for {} columns, schema has {}",
                projection.k,
                schema.k()
            )));
        }
        Ok(ProjectedScheme { projection })
    }
}

impl DependencyScheme for ProjectedScheme {
    fn probe_patterns(&self, q: &Query) -> Result<Vec<Pattern>, SchemeError> {
        Ok(read_variants(&project(q, &self.projection)?))
    }

    fn increment_patterns(&self, q: &Query) -> Result<Vec<Pattern>, SchemeError> {
        self.projection.check(q)?;
        Ok(write_variants(&project_lossy(q, &self.projection)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Query {
        s.parse().unwrap()
    }

    #[test]
    fn twenty_columns_to_three() {
        let mut tokens = vec!["*"; 20];
        tokens[0] = "7";
        tokens[4] = "a@b";
        tokens[9] = "pw";
        let wide = q(&tokens.join(","));
        let proj = Projection::new(vec![0, 4, 9], 20).unwrap();
        assert_eq!(project(&wide, &proj).unwrap(), q("7,a@b,pw"));
    }

    #[test]
    fn identity_and_errors() {
        let proj = Projection::identity(3);
        assert_eq!(project(&q("1,*,2"), &proj).unwrap(), q("1,*,2"));
        let narrow = Projection::new(vec![0], 3).unwrap();
        assert!(matches!(
            project(&q("1,*,2"), &narrow),
            Err(SchemeError::DroppedConstraint { column: 2, .. })
        ));
        assert_eq!(project_lossy(&q("1,*,2"), &narrow), q("1"));
        assert!(Projection::new(vec![], 3).is_err());
        assert!(Projection::new(vec![1, 1], 3).is_err());
        assert!(Projection::new(vec![3], 3).is_err());
    }

    #[test]
    fn bijection_on_constrained_subspaces() {
        let proj = Projection::new(vec![0, 2], 3).unwrap();
        let vals = ["0", "1", "*"];
        let mut seen = std::collections::HashSet::new();
        for a in vals {
            for c in vals {
                let full = q(&format!("{a},*,{c}"));
                assert!(seen.insert(project(&full, &proj).unwrap()));
            }
        }
    }
}
