//! Deciding whether a cache hit was fresh, and replaying a run against a
//! hypothetical cache that is flushed on every write.

use std::collections::HashSet;

use super::run::{OpEvent, OpKind};
use crate::model::{Query, Record};
use crate::table::{Change, WriteLogEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Fresh,
    /// `age_us` runs from the write that made the subspace differ from the
    /// returned rows up to the select's invocation.
    Stale {
        age_us: u64,
    },
}

/// Judges the rows a select on `q` returned from cache.
///
/// `rows` (sorted) showed the table at sequence number `snapshot`. The hit is
/// fresh when the subspace held exactly these rows at some sequence number in
/// `[invoke_seq, return_seq]`, replaying `log` (entry `i` has sequence number
/// `i + 1`).
pub fn judge_select(
    q: &Query,
    rows: &[Record],
    snapshot: u64,
    invoke_seq: u64,
    return_seq: u64,
    invoke_us: u64,
    log: &[WriteLogEntry],
) -> Verdict {
    // Rows present in exactly one of the returned set and the live subspace.
    let mut differing: usize = 0;
    let mut diverged_at = None;
    let returned = |r: &Record| rows.binary_search(r).is_ok();
    if snapshot >= invoke_seq {
        return Verdict::Fresh;
    }
    let end = (return_seq as usize).min(log.len());
    for entry in &log[(snapshot as usize).min(end)..end] {
        let before = differing;
        match &entry.change {
            Change::Inserted(r) if q.contains_unchecked(r) => {
                if returned(r) {
                    differing -= 1;
                } else {
                    differing += 1;
                }
            }
            Change::Deleted(gone) => {
                for r in gone.iter().filter(|r| q.contains_unchecked(r)) {
                    if returned(r) {
                        differing += 1;
                    } else {
                        differing -= 1;
                    }
                }
            }
            _ => {}
        }
        if before == 0 && differing > 0 {
            diverged_at = Some(entry.time_micros);
        }
        if entry.seq >= invoke_seq && differing == 0 {
            return Verdict::Fresh;
        }
    }
    match diverged_at {
        Some(t) if differing > 0 => Verdict::Stale {
            age_us: invoke_us.saturating_sub(t),
        },
        _ => Verdict::Fresh,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NaiveTally {
    pub hits: u64,
    pub misses: u64,
}

/// Replays the timeline of a run against a result cache that is emptied
/// whenever a write reaches the table. A select looks the cache up when it
/// is invoked and stores its result when it returns, unless the cache was
/// emptied while it ran.
pub fn naive_shadow(events: &[OpEvent]) -> NaiveTally {
    // (time, order, worker, index): flushes before stores before lookups.
    let mut timeline: Vec<(u64, u8, usize, usize, usize)> = Vec::with_capacity(2 * events.len());
    for (i, e) in events.iter().enumerate() {
        match e.kind {
            OpKind::Select => {
                timeline.push((e.invoke_us, 2, e.worker, e.index, i));
                timeline.push((e.return_us, 1, e.worker, e.index, i));
            }
            OpKind::Insert | OpKind::Delete => {
                timeline.push((e.write_us.unwrap_or(e.return_us), 0, e.worker, e.index, i));
            }
        }
    }
    timeline.sort_unstable();
    let mut cached: HashSet<&str> = HashSet::new();
    let mut tally = NaiveTally::default();
    let mut last_flush = None;
    for (t, order, _, _, i) in timeline {
        let q = events[i].query.as_str();
        match order {
            0 => {
                cached.clear();
                last_flush = Some(t);
            }
            1 => {
                if last_flush.is_none_or(|f| f < events[i].invoke_us) {
                    cached.insert(q);
                }
            }
            _ => {
                if cached.contains(q) {
                    tally.hits += 1;
                } else {
                    tally.misses += 1;
                }
            }
        }
    }
    tally
}
