//! Exhaustive checks of the revision graphs over small finite domains.

use std::collections::HashSet;

use serde::Serialize;

use crate::model::{read_edge, write_edge, FieldValue, Pattern, PatternToken, Query, QueryToken, Record, Schema};
use crate::planner::dyadic::{dyadic_cover, dyadic_incr_keys, dyadic_probe_keys, DyadicClause, DyadicKey};
use crate::planner::PlanError;
use crate::variants::{read_variants, write_variants};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GraphReport {
    pub k: usize,
    pub domain: usize,
    pub queries: usize,
    pub patterns: usize,
    pub query_pairs: usize,
    /// Pairs where "subspaces share a record" disagrees with `intersects`.
    pub intersection_mismatches: usize,
    /// Pairs where `intersects` disagrees with a path through the pattern layer.
    pub closure_counterexamples: usize,
    pub write_neighborhood_mismatches: usize,
    pub read_neighborhood_mismatches: usize,
    pub witness_failures: usize,
}

impl GraphReport {
    pub fn counterexamples(&self) -> usize {
        self.intersection_mismatches
            + self.closure_counterexamples
            + self.write_neighborhood_mismatches
            + self.read_neighborhood_mismatches
            + self.witness_failures
    }
}

fn product<T: Clone>(alphabet: &[T], k: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                alphabet.iter().map(move |t| {
                    let mut v = prefix.clone();
                    v.push(t.clone());
                    v
                })
            })
            .collect();
    }
    out
}

/// Checks, over values `0..domain` in `k` columns: intersection against record
/// enumeration, the witness construction, that E′ followed by E″ connects
/// exactly the intersecting pairs, and that the variant lists are exactly
/// the E′/E″ neighborhoods.
pub fn verify_graph(k: usize, domain: usize) -> Result<GraphReport, crate::model::ModelError> {
    let values: Vec<FieldValue> = (0..domain).map(FieldValue::from).collect();
    let mut qtokens: Vec<QueryToken> = values.iter().cloned().map(QueryToken::Value).collect();
    qtokens.push(QueryToken::Star);
    let mut ptokens: Vec<PatternToken> = values.iter().cloned().map(PatternToken::Value).collect();
    ptokens.extend([PatternToken::Star, PatternToken::QMark]);

    let queries: Vec<Query> = product(&qtokens, k).into_iter().map(Query::new).collect();
    let patterns: Vec<Pattern> = product(&ptokens, k).into_iter().map(Pattern::new).collect();
    let records: Vec<Record> = product(&values, k).into_iter().map(Record::new).collect();
    let schema = Schema::numeric(k.max(1))?;

    let mut report = GraphReport {
        k,
        domain,
        queries: queries.len(),
        patterns: patterns.len(),
        query_pairs: queries.len() * queries.len(),
        ..GraphReport::default()
    };

    // Adjacency as bitsets over pattern indices.
    let words = patterns.len().div_ceil(64);
    let mut out_edges = vec![0u64; queries.len() * words];
    let mut in_edges = vec![0u64; queries.len() * words];
    for (qi, q) in queries.iter().enumerate() {
        let writes: HashSet<Pattern> = write_variants(q).into_iter().collect();
        let reads: HashSet<Pattern> = read_variants(q).into_iter().collect();
        let mut write_hood = HashSet::new();
        let mut read_hood = HashSet::new();
        for (pi, p) in patterns.iter().enumerate() {
            if write_edge(q, p)? {
                out_edges[qi * words + pi / 64] |= 1 << (pi % 64);
                write_hood.insert(p.clone());
            }
            if read_edge(p, q)? {
                in_edges[qi * words + pi / 64] |= 1 << (pi % 64);
                read_hood.insert(p.clone());
            }
        }
        report.write_neighborhood_mismatches += usize::from(writes != write_hood);
        report.read_neighborhood_mismatches += usize::from(reads != read_hood);
    }

    let members: Vec<Vec<bool>> = queries
        .iter()
        .map(|q| records.iter().map(|r| q.contains_unchecked(r)).collect())
        .collect();
    for (ai, a) in queries.iter().enumerate() {
        for (bi, b) in queries.iter().enumerate() {
            let shared = members[ai].iter().zip(&members[bi]).any(|(x, y)| *x && *y);
            let claimed = a.intersects(b)?;
            report.intersection_mismatches += usize::from(shared != claimed);
            let path = (0..words).any(|w| out_edges[ai * words + w] & in_edges[bi * words + w] != 0);
            report.closure_counterexamples += usize::from(path != claimed);
            let witness_ok = match a.witness(b, &schema)? {
                Some(r) => claimed && a.contains(&r)? && b.contains(&r)?,
                None => !claimed,
            };
            report.witness_failures += usize::from(!witness_ok);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DyadicReport {
    pub w: u32,
    pub ranges: usize,
    /// Range pairs compared key set against key set; 0 when only node pairs
    /// were compared.
    pub range_pairs: u64,
    pub node_pairs: u64,
    pub soundness_violations: u64,
    pub cover_violations: u64,
    pub max_cover_len: usize,
    pub max_probe_keys: usize,
    pub max_incr_keys: usize,
    /// The cover of [1,7] at w=3 matches (0,0,1),(0,1,*),(1,*,*); `None` for w≠3.
    pub golden_cover_ok: Option<bool>,
}

impl DyadicReport {
    pub fn sound(&self) -> bool {
        self.soundness_violations == 0 && self.cover_violations == 0 && self.golden_cover_ok != Some(false)
    }
}

/// Largest width for which every pair of ranges is compared directly.
pub const EXHAUSTIVE_MAX_W: u32 = 8;
pub const VERIFY_MAX_W: u32 = 12;

/// Checks that probe and increment key sets meet exactly when the ranges
/// do. Up to [`EXHAUSTIVE_MAX_W`] every range pair is compared; above it,
/// every node pair is compared and every cover is checked for exactness,
/// which implies the range-pair statement.
pub fn verify_dyadic(w: u32) -> Result<DyadicReport, PlanError> {
    if w == 0 || w > VERIFY_MAX_W {
        return Err(PlanError::Width(w));
    }
    let size = 1u64 << w;
    let mut report = DyadicReport {
        w,
        ..DyadicReport::default()
    };
    if w == 3 {
        let shown: Vec<String> = dyadic_cover(1, 7, 3)?.iter().map(ToString::to_string).collect();
        report.golden_cover_ok = Some(shown == ["(0,0,1)", "(0,1,*)", "(1,*,*)"]);
    }

    let bits = 3 * (1usize << w);
    let words = bits.div_ceil(64);
    let exhaustive = w <= EXHAUSTIVE_MAX_W;
    let mut ranges = Vec::new();
    let mut probe_sets: Vec<u64> = Vec::new();
    let mut incr_sets: Vec<u64> = Vec::new();

    for lo in 0..size {
        for hi in lo..size {
            let cover = dyadic_cover(lo, hi, w)?;
            let mut next = lo;
            let mut exact = true;
            for c in &cover {
                exact &= c.lo() == next;
                next = c.hi() + 1;
            }
            exact &= next == hi + 1;
            if (lo, hi) != (0, size - 1) && w >= 2 && cover.len() > 2 * w as usize - 2 {
                exact = false;
            }
            report.cover_violations += u64::from(!exact);
            report.max_cover_len = report.max_cover_len.max(cover.len());

            let probe = dyadic_probe_keys(&cover);
            report.max_probe_keys = report.max_probe_keys.max(probe.len());
            report.ranges += 1;
            if exhaustive {
                let mut p = vec![0u64; words];
                for key in probe.keys() {
                    let i = key.index();
                    p[i / 64] |= 1 << (i % 64);
                }
                let mut q = vec![0u64; words];
                for c in &cover {
                    for key in dyadic_incr_keys(c).keys() {
                        let i = key.index();
                        q[i / 64] |= 1 << (i % 64);
                    }
                }
                probe_sets.extend(p);
                incr_sets.extend(q);
                ranges.push((lo, hi));
            }
        }
    }

    if exhaustive {
        for (ri, &(rlo, rhi)) in ranges.iter().enumerate() {
            let p = &probe_sets[ri * words..(ri + 1) * words];
            for (wi, &(wlo, whi)) in ranges.iter().enumerate() {
                let q = &incr_sets[wi * words..(wi + 1) * words];
                let keyed = p.iter().zip(q).any(|(a, b)| a & b != 0);
                let overlap = rlo <= whi && wlo <= rhi;
                report.soundness_violations += u64::from(keyed != overlap);
            }
        }
        report.range_pairs = (ranges.len() as u64).pow(2);
    }

    let nodes: Vec<DyadicClause> = (0..=w)
        .flat_map(|depth| {
            (0..1u64 << depth).map(move |prefix| DyadicClause {
                column: 0,
                width: w,
                depth,
                prefix,
            })
        })
        .collect();
    let incr_by_node: Vec<Vec<usize>> = nodes
        .iter()
        .map(|n| dyadic_incr_keys(n).keys().map(|k| k.index()).collect())
        .collect();
    // Every node is the cover of its own range, so this is the maximum over covers.
    report.max_incr_keys = incr_by_node.iter().map(Vec::len).max().unwrap_or(0);
    let mut probed = vec![false; bits];
    for r in &nodes {
        let probe: Vec<usize> = dyadic_probe_keys(&[*r]).keys().map(|k| k.index()).collect();
        for &i in &probe {
            probed[i] = true;
        }
        for (c, incr) in nodes.iter().zip(&incr_by_node) {
            let keyed = incr.iter().any(|&i| probed[i]);
            let overlap = r.lo() <= c.hi() && c.lo() <= r.hi();
            report.soundness_violations += u64::from(keyed != overlap || overlap != r.intersects(c));
        }
        for &i in &probe {
            probed[i] = false;
        }
    }
    report.node_pairs = (nodes.len() as u64).pow(2);
    debug_assert!(nodes.iter().all(|n| DyadicKey::Subtree(*n).index() < bits));
    Ok(report)
}
