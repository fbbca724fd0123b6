//! Whitelist trimming: a counter is kept only if some whitelisted write
//! increments it and some whitelisted read probes it.

use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::cachedb::{DependencyScheme, SchemeError};
use crate::model::{Pattern, PatternToken, Query, QueryToken};
use crate::variants::{read_variants, write_variants};

use super::whitelist::{ColumnSpec, Whitelist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateToken {
    /// A value supplied at run time.
    Bound,
    Star,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatternTemplate(pub Vec<TemplateToken>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotToken {
    Bound,
    Star,
    QMark,
}

/// A counter template: a pattern whose values are filled in from the query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotPattern(pub Vec<SlotToken>);

const SENTINEL: &str = "$";

impl PatternTemplate {
    pub fn tokens(&self) -> &[TemplateToken] {
        &self.0
    }

    /// The shape of a concrete query.
    pub fn of_query(q: &Query) -> Self {
        PatternTemplate(
            q.tokens()
                .iter()
                .map(|t| match t {
                    QueryToken::Star => TemplateToken::Star,
                    QueryToken::Value(_) => TemplateToken::Bound,
                })
                .collect(),
        )
    }

    // Bound slots become one shared sentinel value, so two slots at the same
    // position always compare equal: the over-approximation trimming needs.
    fn as_query(&self) -> Query {
        Query::new(
            self.0
                .iter()
                .map(|t| match t {
                    TemplateToken::Bound => QueryToken::Value(SENTINEL.into()),
                    TemplateToken::Star => QueryToken::Star,
                })
                .collect(),
        )
    }

    pub fn render(&self, columns: &[ColumnSpec]) -> String {
        let slots = SlotPattern(
            self.0
                .iter()
                .map(|t| match t {
                    TemplateToken::Bound => SlotToken::Bound,
                    TemplateToken::Star => SlotToken::Star,
                })
                .collect(),
        );
        slots.render(columns)
    }
}

impl SlotPattern {
    fn from_pattern(p: &Pattern) -> Self {
        SlotPattern(
            p.tokens()
                .iter()
                .map(|t| match t {
                    PatternToken::Value(_) => SlotToken::Bound,
                    PatternToken::Star => SlotToken::Star,
                    PatternToken::QMark | PatternToken::Percent => SlotToken::QMark,
                })
                .collect(),
        )
    }

    /// Fills bound slots from the query's values at the same positions.
    pub fn instantiate(&self, q: &Query) -> Pattern {
        Pattern::new(
            self.0
                .iter()
                .zip(q.tokens())
                .map(|(s, t)| match (s, t) {
                    (SlotToken::Bound, QueryToken::Value(v)) => PatternToken::Value(v.clone()),
                    (SlotToken::QMark, _) => PatternToken::QMark,
                    _ => PatternToken::Star,
                })
                .collect(),
        )
    }

    /// Bound slots print as `$<column name>`.
    pub fn render(&self, columns: &[ColumnSpec]) -> String {
        let parts: Vec<String> = self
            .0
            .iter()
            .enumerate()
            .map(|(i, t)| match t {
                SlotToken::Bound => format!("${}", columns.get(i).map_or_else(|| i.to_string(), |c| c.name.clone())),
                SlotToken::Star => "*".into(),
                SlotToken::QMark => "?".into(),
            })
            .collect();
        format!("({})", parts.join(","))
    }
}

impl fmt::Display for SlotPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplatePlan {
    pub template: PatternTemplate,
    pub patterns: Vec<SlotPattern>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimmedPlan {
    pub columns: Vec<ColumnSpec>,
    /// In order of first appearance among the read probe lists.
    pub kept: Vec<SlotPattern>,
    pub reads: Vec<TemplatePlan>,
    pub writes: Vec<TemplatePlan>,
}

fn slot_variants(t: &PatternTemplate, read: bool) -> Vec<SlotPattern> {
    let q = t.as_query();
    let variants = if read { read_variants(&q) } else { write_variants(&q) };
    variants.iter().map(SlotPattern::from_pattern).collect()
}

pub fn trim(reads: &[PatternTemplate], writes: &[PatternTemplate]) -> TrimmedPlan {
    let k = reads.iter().chain(writes).map(|t| t.0.len()).max().unwrap_or(0);
    let columns = (0..k)
        .map(|i| ColumnSpec {
            name: format!("c{i}"),
            range_bits: None,
        })
        .collect();
    trim_with_columns(columns, reads, writes)
}

pub fn trim_with_columns(
    columns: Vec<ColumnSpec>,
    reads: &[PatternTemplate],
    writes: &[PatternTemplate],
) -> TrimmedPlan {
    let incremented: IndexSet<SlotPattern> = writes.iter().flat_map(|w| slot_variants(w, false)).collect();
    let mut kept = IndexSet::new();
    let reads: Vec<TemplatePlan> = reads
        .iter()
        .map(|r| {
            let patterns: Vec<SlotPattern> = slot_variants(r, true)
                .into_iter()
                .filter(|p| incremented.contains(p))
                .collect();
            kept.extend(patterns.iter().cloned());
            TemplatePlan {
                template: r.clone(),
                patterns,
            }
        })
        .collect();
    let writes = writes
        .iter()
        .map(|w| TemplatePlan {
            template: w.clone(),
            patterns: slot_variants(w, false)
                .into_iter()
                .filter(|p| kept.contains(p))
                .collect(),
        })
        .collect();
    TrimmedPlan {
        columns,
        kept: kept.into_iter().collect(),
        reads,
        writes,
    }
}

impl TrimmedPlan {
    pub fn from_whitelist(w: &Whitelist) -> Self {
        trim_with_columns(w.columns.clone(), &w.reads, &w.writes)
    }

    pub fn read_plan(&self, template: &PatternTemplate) -> Option<&TemplatePlan> {
        self.reads.iter().find(|p| &p.template == template)
    }

    pub fn write_plan(&self, template: &PatternTemplate) -> Option<&TemplatePlan> {
        self.writes.iter().find(|p| &p.template == template)
    }

    fn check(&self, q: &Query) -> Result<(), SchemeError> {
        if q.tokens().len() != self.columns.len() {
            return Err(crate::model::ModelError::Dimension {
                expected: self.columns.len(),
                actual: q.tokens().len(),
            }
            .into());
        }
        Ok(())
    }

    pub fn document(&self) -> PlanDocument {
        let render = |list: &[SlotPattern]| list.iter().map(|p| p.render(&self.columns)).collect();
        let entries = |plans: &[TemplatePlan]| {
            plans
                .iter()
                .map(|p| PlanEntry {
                    template: p.template.render(&self.columns),
                    patterns: render(&p.patterns),
                })
                .collect()
        };
        PlanDocument {
            schema_version: 1,
            columns: self.columns.clone(),
            kept: render(&self.kept),
            reads: entries(&self.reads),
            writes: entries(&self.writes),
        }
    }
}

impl DependencyScheme for TrimmedPlan {
    fn probe_patterns(&self, q: &Query) -> Result<Vec<Pattern>, SchemeError> {
        self.check(q)?;
        let plan = self
            .read_plan(&PatternTemplate::of_query(q))
            .ok_or_else(|| SchemeError::WhitelistViolation {
                query: q.to_string(),
                side: "read",
            })?;
        Ok(plan.patterns.iter().map(|p| p.instantiate(q)).collect())
    }

    fn increment_patterns(&self, q: &Query) -> Result<Vec<Pattern>, SchemeError> {
        self.check(q)?;
        let plan = self
            .write_plan(&PatternTemplate::of_query(q))
            .ok_or_else(|| SchemeError::WhitelistViolation {
                query: q.to_string(),
                side: "write",
            })?;
        Ok(plan.patterns.iter().map(|p| p.instantiate(q)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub template: String,
    pub patterns: Vec<String>,
}

/// JSON form of a plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub schema_version: u32,
    pub columns: Vec<ColumnSpec>,
    pub kept: Vec<String>,
    pub reads: Vec<PlanEntry>,
    pub writes: Vec<PlanEntry>,
}
