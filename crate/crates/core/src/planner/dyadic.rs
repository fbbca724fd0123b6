//! Integer ranges over a `w`-bit column, written as unions of binary-trie
//! subtrees.
//!
//! A range read probes the subtree counter of every node in its cover plus a
//! collapsed `%` counter for every proper ancestor of those nodes. A write
//! to one node increments the subtree counters of the node and all its
//! ancestors, plus the node's own `%` counter. Two nodes intersect exactly
//! when one is a prefix of the other; the first case is caught by the
//! ancestor subtree counters, the second by the `%` counter.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{Pattern, PatternToken};

use super::PlanError;

/// A trie node: the `depth` leading bits equal `prefix`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicClause {
    pub column: usize,
    pub width: u32,
    pub depth: u32,
    pub prefix: u64,
}

fn check_width(width: u32) -> Result<(), PlanError> {
    if (1..=32).contains(&width) {
        Ok(())
    } else {
        Err(PlanError::Width(width))
    }
}

impl DyadicClause {
    pub fn root(column: usize, width: u32) -> Self {
        DyadicClause {
            column,
            width,
            depth: 0,
            prefix: 0,
        }
    }

    pub fn leaf(column: usize, width: u32, value: u64) -> Self {
        DyadicClause {
            column,
            width,
            depth: width,
            prefix: value,
        }
    }

    pub fn lo(&self) -> u64 {
        self.prefix << (self.width - self.depth)
    }

    pub fn hi(&self) -> u64 {
        self.lo() + (1u64 << (self.width - self.depth)) - 1
    }

    pub fn is_leaf(&self) -> bool {
        self.depth == self.width
    }

    /// Prefix bits, most significant first.
    pub fn bits(&self) -> Vec<u8> {
        (0..self.depth)
            .map(|i| ((self.prefix >> (self.depth - 1 - i)) & 1) as u8)
            .collect()
    }

    pub fn parent(&self) -> Option<Self> {
        (self.depth > 0).then(|| DyadicClause {
            depth: self.depth - 1,
            prefix: self.prefix >> 1,
            ..*self
        })
    }

    /// Proper prefixes, root first.
    pub fn ancestors(&self) -> Vec<Self> {
        let mut out = Vec::with_capacity(self.depth as usize);
        let mut node = self.parent();
        while let Some(n) = node {
            out.push(n);
            node = n.parent();
        }
        out.reverse();
        out
    }

    pub fn is_prefix_of(&self, other: &Self) -> bool {
        self.column == other.column
            && self.width == other.width
            && self.depth <= other.depth
            && other.prefix >> (other.depth - self.depth) == self.prefix
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }

    /// Position in breadth-first order: root 0, then its children 1 and 2.
    pub fn node_index(&self) -> usize {
        (1usize << self.depth) - 1 + self.prefix as usize
    }

    fn tokens(&self, rest: PatternToken) -> Pattern {
        let mut tokens: Vec<PatternToken> = self
            .bits()
            .into_iter()
            .map(|b| PatternToken::Value(if b == 0 { "b0" } else { "b1" }.into()))
            .collect();
        tokens.resize(self.width as usize, rest);
        Pattern::new(tokens)
    }
}

impl fmt::Display for DyadicClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.bits().iter().map(u8::to_string).collect();
        parts.resize(self.width as usize, "*".into());
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DyadicKey {
    Subtree(DyadicClause),
    /// Collapsed counter shared by everything strictly below the node.
    Ancestor(DyadicClause),
}

impl DyadicKey {
    /// One pattern position per bit: prefix bits as `b0`/`b1`, the rest `*`
    /// for a subtree key or `%` for an ancestor key.
    pub fn pattern(&self) -> Pattern {
        match self {
            DyadicKey::Subtree(c) => c.tokens(PatternToken::Star),
            DyadicKey::Ancestor(c) => c.tokens(PatternToken::Percent),
        }
    }

    /// Dense identifier in `0..3 * 2^w`: subtree keys first, then ancestors.
    pub fn index(&self) -> usize {
        match self {
            DyadicKey::Subtree(c) => c.node_index(),
            DyadicKey::Ancestor(c) => (1usize << (c.width + 1)) - 1 + c.node_index(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DyadicKeySet {
    pub subtree: BTreeSet<DyadicClause>,
    pub ancestors: BTreeSet<DyadicClause>,
}

impl DyadicKeySet {
    pub fn len(&self) -> usize {
        self.subtree.len() + self.ancestors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn keys(&self) -> impl Iterator<Item = DyadicKey> + '_ {
        self.subtree
            .iter()
            .map(|c| DyadicKey::Subtree(*c))
            .chain(self.ancestors.iter().map(|c| DyadicKey::Ancestor(*c)))
    }

    pub fn intersects(&self, other: &DyadicKeySet) -> bool {
        !self.subtree.is_disjoint(&other.subtree) || !self.ancestors.is_disjoint(&other.ancestors)
    }

    pub fn extend(&mut self, other: DyadicKeySet) {
        self.subtree.extend(other.subtree);
        self.ancestors.extend(other.ancestors);
    }
}

/// Maximal aligned blocks exactly covering `[lo, hi]`, ascending.
pub fn dyadic_cover(lo: u64, hi: u64, width: u32) -> Result<Vec<DyadicClause>, PlanError> {
    dyadic_cover_column(0, lo, hi, width)
}

pub fn dyadic_cover_column(column: usize, lo: u64, hi: u64, width: u32) -> Result<Vec<DyadicClause>, PlanError> {
    check_width(width)?;
    if lo > hi || hi >> width != 0 {
        return Err(PlanError::Range { lo, hi, width });
    }
    let mut out = Vec::new();
    let mut at = lo;
    loop {
        let mut level = if at == 0 { width } else { at.trailing_zeros().min(width) };
        while at + (1u64 << level) - 1 > hi {
            level -= 1;
        }
        out.push(DyadicClause {
            column,
            width,
            depth: width - level,
            prefix: at >> level,
        });
        let next = at + (1u64 << level);
        if next > hi {
            return Ok(out);
        }
        at = next;
    }
}

pub fn dyadic_probe_keys(cover: &[DyadicClause]) -> DyadicKeySet {
    let mut set = DyadicKeySet::default();
    for c in cover {
        set.subtree.insert(*c);
        set.ancestors.extend(c.ancestors());
    }
    set
}

pub fn dyadic_incr_keys(clause: &DyadicClause) -> DyadicKeySet {
    let mut set = DyadicKeySet::default();
    set.subtree.insert(*clause);
    set.subtree.extend(clause.ancestors());
    if !clause.is_leaf() {
        set.ancestors.insert(*clause);
    }
    set
}
