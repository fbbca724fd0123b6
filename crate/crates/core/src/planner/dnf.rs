//! Disjunctions: a select over `c1 ∨ c2 ∨ …` depends on the union of the
//! clauses' read variants; a write over one is invalidated clause by clause.

use indexmap::IndexSet;

use crate::model::{Pattern, Query};
use crate::variants::read_variants;

use super::PlanError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnfPlan {
    /// Deduplicated, in order of first appearance.
    pub probe: Vec<Pattern>,
    pub incr: Vec<Query>,
}

pub fn dnf_expand(clauses: &[Query]) -> Result<DnfPlan, PlanError> {
    let first = clauses.first().ok_or(PlanError::EmptyDisjunction)?;
    let k = first.tokens().len();
    if let Some(bad) = clauses.iter().find(|c| c.tokens().len() != k) {
        return Err(crate::model::ModelError::Dimension {
            expected: k,
            actual: bad.tokens().len(),
        }
        .into());
    }
    let probe: IndexSet<Pattern> = clauses.iter().flat_map(read_variants).collect();
    Ok(DnfPlan {
        probe: probe.into_iter().collect(),
        incr: clauses.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Query {
        s.parse().unwrap()
    }

    #[test]
    fn single_clause_is_plain_read_variants() {
        let plan = dnf_expand(&[q("*,3,2")]).unwrap();
        assert_eq!(plan.probe, read_variants(&q("*,3,2")));
        assert_eq!(plan.incr, vec![q("*,3,2")]);
    }

    #[test]
    fn two_user_clauses_share_two_patterns() {
        let plan = dnf_expand(&[q("2,7,*"), q("3,7,*")]).unwrap();
        let expected: Vec<Pattern> = ["2,7,*", "?,7,*", "2,?,*", "?,?,*", "3,7,*", "3,?,*"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(plan.probe, expected);
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert_eq!(dnf_expand(&[]), Err(PlanError::EmptyDisjunction));
        assert!(dnf_expand(&[q("1,*"), q("1")]).is_err());
    }
}
