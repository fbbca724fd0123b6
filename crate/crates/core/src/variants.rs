//! Revision-key neighborhoods of a query.
//!
//! A select probes every pattern obtained from its query by turning any
//! subset of values into `?`; a write increments every pattern obtained by
//! turning values into `*` and stars into `?`. Both lists are produced in a
//! fixed order, because versions are compared position by position.

use thiserror::Error;

use crate::model::{Pattern, PatternToken, Query, QueryToken};

/// The kind of token a substitution rule matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenClass {
    Star,
    NonStar,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unsupported substitution rule set: only the read and write rule sets are allowed")]
pub struct UnsupportedRules;

/// One of the two rule sets used by the algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubstitutionRules {
    /// `{value → ?}`
    Read,
    /// `{* → ?, value → *}`
    Write,
}

impl SubstitutionRules {
    /// Builds a rule set from explicit `(class, replacement)` pairs. Anything
    /// other than the read or write set is refused.
    pub fn from_rules(rules: &[(TokenClass, PatternToken)]) -> Result<Self, UnsupportedRules> {
        let mut star = None;
        let mut non_star = None;
        for (class, to) in rules {
            let slot = match class {
                TokenClass::Star => &mut star,
                TokenClass::NonStar => &mut non_star,
            };
            if slot.replace(to.clone()).is_some() {
                return Err(UnsupportedRules);
            }
        }
        match (star, non_star) {
            (None, Some(PatternToken::QMark)) => Ok(SubstitutionRules::Read),
            (Some(PatternToken::QMark), Some(PatternToken::Star)) => Ok(SubstitutionRules::Write),
            _ => Err(UnsupportedRules),
        }
    }

    fn substitute(self, token: &QueryToken) -> Option<PatternToken> {
        match (self, token) {
            (SubstitutionRules::Read, QueryToken::Value(_)) => Some(PatternToken::QMark),
            (SubstitutionRules::Read, QueryToken::Star) => None,
            (SubstitutionRules::Write, QueryToken::Value(_)) => Some(PatternToken::Star),
            (SubstitutionRules::Write, QueryToken::Star) => Some(PatternToken::QMark),
        }
    }
}

/// All patterns reachable from `q` by applying `rules` at any subset of
/// positions.
///
/// Order: for each prefix length, the variants keeping the original token at
/// the new position come first, followed by the variants substituting it.
/// The untouched query is therefore always first.
pub fn all_variants_of(q: &Query, rules: SubstitutionRules) -> Vec<Pattern> {
    let mut variants: Vec<Vec<PatternToken>> = vec![Vec::with_capacity(q.tokens().len())];
    for token in q.tokens() {
        let keep = PatternToken::from(token);
        match rules.substitute(token) {
            None => variants.iter_mut().for_each(|v| v.push(keep.clone())),
            Some(alt) => {
                let mut alternative = variants.clone();
                variants.iter_mut().for_each(|v| v.push(keep.clone()));
                alternative.iter_mut().for_each(|v| v.push(alt.clone()));
                variants.extend(alternative);
            }
        }
    }
    variants.into_iter().map(Pattern::new).collect()
}

/// Counters a select of `q` must read.
pub fn read_variants(q: &Query) -> Vec<Pattern> {
    all_variants_of(q, SubstitutionRules::Read)
}

/// Counters a write of `q` must increment; always `2^k` of them.
pub fn write_variants(q: &Query) -> Vec<Pattern> {
    all_variants_of(q, SubstitutionRules::Write)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> Query {
        s.parse().unwrap()
    }

    fn ps(list: &[&str]) -> Vec<Pattern> {
        list.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn read_rules_on_star_3_2_give_four_in_order() {
        assert_eq!(
            all_variants_of(&q("*,3,2"), SubstitutionRules::Read),
            ps(&["*,3,2", "*,?,2", "*,3,?", "*,?,?"])
        );
    }

    #[test]
    fn write_rules_on_u_star_star() {
        let got = write_variants(&q("U,*,*"));
        let mut expected = ps(&["U,*,*", "*,*,*", "U,?,*", "*,?,*", "U,*,?", "*,*,?", "U,?,?", "*,?,?"]);
        assert_eq!(got.len(), 8);
        let mut sorted = got.clone();
        sorted.sort();
        expected.sort();
        assert_eq!(sorted, expected);
    }

    #[test]
    fn write_variants_of_star_2_3_in_canonical_order() {
        // The printed list in the literature repeats (*,2,3); the rule set
        // forces (*,2,*) in that slot.
        assert_eq!(
            write_variants(&q("*,2,3")),
            ps(&["*,2,3", "?,2,3", "*,*,3", "?,*,3", "*,2,*", "?,2,*", "*,*,*", "?,*,*"])
        );
    }

    #[test]
    fn empty_query_has_one_empty_variant() {
        assert_eq!(read_variants(&Query::new(vec![])), vec![Pattern::new(vec![])]);
        assert_eq!(write_variants(&Query::new(vec![])), vec![Pattern::new(vec![])]);
    }

    #[test]
    fn read_variants_examples() {
        assert_eq!(read_variants(&q("*,G,D")), ps(&["*,G,D", "*,?,D", "*,G,?", "*,?,?"]));
        assert_eq!(read_variants(&q("*,*,*")), ps(&["*,*,*"]));
    }

    #[test]
    fn point_write_has_no_qmarks() {
        let v = write_variants(&q("2,2,0"));
        assert_eq!(v.len(), 8);
        assert!(v.iter().all(|p| !p.tokens().contains(&PatternToken::QMark)));
    }

    #[test]
    fn rule_construction_only_accepts_the_two_sets() {
        use PatternToken::{Percent, QMark};
        use TokenClass::NonStar;
        assert_eq!(
            SubstitutionRules::from_rules(&[(NonStar, QMark)]),
            Ok(SubstitutionRules::Read)
        );
        assert_eq!(
            SubstitutionRules::from_rules(&[(TokenClass::Star, QMark), (NonStar, PatternToken::Star)]),
            Ok(SubstitutionRules::Write)
        );
        assert!(SubstitutionRules::from_rules(&[(TokenClass::Star, QMark)]).is_err());
        assert!(SubstitutionRules::from_rules(&[(NonStar, Percent)]).is_err());
        assert!(SubstitutionRules::from_rules(&[(NonStar, QMark), (NonStar, QMark)]).is_err());
    }
}
