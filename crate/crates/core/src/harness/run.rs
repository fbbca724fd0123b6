//! Executing a workload.

use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::judge::{judge_select, naive_shadow, Verdict};
use super::report::FreshnessReport;
use super::sched::{worker_rng, Pacer, PacerClock, Stream, ThreadPacer, Turn, VirtualScheduler};
use super::spec::{EvictionSpec, EvictionTarget, SchedulerKind, SchemeKind, Strategy, WorkloadSpec};
use super::wrappers::{ScheduledCache, ScheduledDb};
use super::HarnessError;
use crate::cache::{Cache, CacheConfig, MemoryCache};
use crate::cachedb::{digest, CacheDb, CachedEntry, DependencyScheme, FullScheme, Source, Version, WrapperConfig};
use crate::clock::Clock;
use crate::model::{FieldValue, Query, QueryToken, Record, Schema};
use crate::planner::trim::trim_with_columns;
use crate::planner::{ColumnSpec, PatternTemplate, ProjectedScheme, Projection, TemplateToken};
use crate::table::{Database, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Select,
    Insert,
    Delete,
}

/// One completed operation. Times are unskewed microseconds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpEvent {
    pub worker: usize,
    pub index: usize,
    pub kind: OpKind,
    pub query: String,
    pub invoke_us: u64,
    pub return_us: u64,
    /// Table sequence number at invocation and at return.
    pub invoke_seq: u64,
    pub return_seq: u64,
    /// Sequence number the returned rows reflect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Source>,
    /// Leading 16 hex digits of the SHA-256 of the returned rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    /// Sequence number and commit time of a write.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub write_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affected: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stale_age_us: Option<u64>,
}

impl OpEvent {
    fn new(worker: usize, index: usize, kind: OpKind, query: &Query) -> Self {
        OpEvent {
            worker,
            index,
            kind,
            query: query.to_string(),
            invoke_us: 0,
            return_us: 0,
            invoke_seq: 0,
            return_seq: 0,
            snapshot: None,
            source: None,
            digest: None,
            write_seq: None,
            write_us: None,
            affected: None,
            stale_age_us: None,
        }
    }

    pub fn is_hit(&self) -> bool {
        matches!(self.source, Some(Source::Local | Source::Global))
    }

    #[cfg(test)]
    pub(crate) fn select_for_test(worker: usize, index: usize, query: &str, invoke_us: u64, return_us: u64) -> Self {
        OpEvent {
            invoke_us,
            return_us,
            ..OpEvent::new(worker, index, OpKind::Select, &query.parse().unwrap())
        }
    }

    #[cfg(test)]
    pub(crate) fn write_for_test(worker: usize, index: usize, write_us: u64) -> Self {
        OpEvent {
            invoke_us: write_us,
            return_us: write_us,
            write_us: Some(write_us),
            ..OpEvent::new(worker, index, OpKind::Insert, &"(0,0,0)".parse().unwrap())
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Ordered by return time, then worker, then index.
    pub events: Vec<OpEvent>,
    pub report: FreshnessReport,
}

#[derive(Debug, Default)]
struct WorkerTally {
    events: Vec<OpEvent>,
    stale_ages: Vec<u64>,
    inserts: u64,
    deletes: u64,
    epsilon_us: u64,
    served_local: u64,
    served_global: u64,
    bypassed: u64,
    max_recursion_depth: usize,
    evictions_accepted: u64,
    evictions_refused: u64,
    oracle_mismatches: u64,
}

struct Shared {
    spec: WorkloadSpec,
    pacer: Arc<dyn Pacer>,
    table: Arc<Table>,
    local: Arc<MemoryCache>,
    global: Arc<MemoryCache>,
    scheme: Arc<dyn DependencyScheme>,
}

/// What a worker does for each operation, per strategy.
enum Frontend {
    Revision(CacheDb),
    Naive { db: ScheduledDb, cache: ScheduledCache },
    Direct(ScheduledDb),
}

struct Served {
    rows: Vec<Record>,
    source: Source,
    snapshot: Option<u64>,
    recursion_depth: usize,
    bypassed: bool,
}

impl Frontend {
    fn select(&self, q: &Query) -> Result<Served, HarnessError> {
        match self {
            Frontend::Revision(db) => {
                let out = db.select_traced(q, "")?;
                Ok(Served {
                    rows: out.rows,
                    source: out.source,
                    snapshot: out.snapshot,
                    recursion_depth: out.recursion_depth,
                    bypassed: out.bypassed,
                })
            }
            Frontend::Naive { db, cache } => {
                let key = digest(q, "");
                if let Some(entry) = cache
                    .get(&key)
                    .ok()
                    .flatten()
                    .and_then(|b| CachedEntry::decode(&b).ok())
                {
                    return Ok(Served {
                        rows: entry.rows,
                        source: Source::Global,
                        snapshot: entry.snapshot,
                        recursion_depth: 0,
                        bypassed: false,
                    });
                }
                let snap = db.select(q)?;
                let entry = CachedEntry {
                    version: Version::default(),
                    snapshot: Some(snap.seq),
                    rows: snap.rows,
                };
                let _ = cache.set(&key, &entry.encode());
                Ok(Served {
                    rows: entry.rows,
                    source: Source::Database,
                    snapshot: Some(snap.seq),
                    recursion_depth: 0,
                    bypassed: false,
                })
            }
            Frontend::Direct(db) => {
                let snap = db.select(q)?;
                Ok(Served {
                    rows: snap.rows,
                    source: Source::Database,
                    snapshot: Some(snap.seq),
                    recursion_depth: 0,
                    bypassed: false,
                })
            }
        }
    }

    /// Returns rows affected and the write's sequence number.
    fn write(&self, kind: OpKind, q: &Query) -> Result<(usize, u64), HarnessError> {
        match self {
            Frontend::Revision(db) => {
                let out = match kind {
                    OpKind::Insert => db.insert(&point_of(q))?,
                    _ => db.delete(q)?,
                };
                Ok((out.affected, out.seq))
            }
            Frontend::Naive { db, cache } => {
                let out = raw_write(db, kind, q)?;
                let _ = cache.flush_all();
                Ok(out)
            }
            Frontend::Direct(db) => raw_write(db, kind, q),
        }
    }
}

fn point_of(q: &Query) -> Record {
    Record::new(q.tokens().iter().filter_map(|t| t.value().cloned()).collect())
}

fn raw_write(db: &ScheduledDb, kind: OpKind, q: &Query) -> Result<(usize, u64), HarnessError> {
    let receipt = match kind {
        OpKind::Insert => db.insert(&point_of(q))?,
        _ => db.delete(q)?,
    };
    Ok((receipt.affected, receipt.seq))
}

fn rows_digest(rows: &[Record]) -> String {
    let entry = CachedEntry {
        version: Version::default(),
        snapshot: None,
        rows: rows.to_vec(),
    };
    hex::encode(&Sha256::digest(entry.encode())[..8])
}

fn value(v: usize) -> QueryToken {
    QueryToken::Value(FieldValue::from(v))
}

/// Row-major grid points spaced `ceil(grid^3 / fill)` apart; fewer than
/// `fill` when the stride does not divide the grid evenly.
pub fn initial_points(grid: usize, fill: usize) -> Vec<[usize; 3]> {
    let cells = grid.pow(3);
    if fill == 0 {
        return Vec::new();
    }
    let stride = cells.div_ceil(fill);
    (0..cells)
        .step_by(stride)
        .take(fill)
        .map(|i| [i / (grid * grid), (i / grid) % grid, i % grid])
        .collect()
}

fn point_query(p: [usize; 3], pad: usize) -> Query {
    let mut tokens: Vec<QueryToken> = p.iter().map(|&v| value(v)).collect();
    tokens.extend((0..pad).map(|_| value(0)));
    Query::new(tokens)
}

fn draw_op(spec: &WorkloadSpec, rng: &mut ChaCha8Rng) -> (OpKind, Query) {
    let g = spec.grid;
    let u: f64 = rng.gen();
    let mut tokens;
    let kind = if u < spec.mix.select {
        // A plane: one fixed coordinate.
        let axis = rng.gen_range(0..3);
        tokens = vec![QueryToken::Star; 3];
        tokens[axis] = value(rng.gen_range(0..g));
        OpKind::Select
    } else if u < spec.mix.select + spec.mix.insert {
        let p = [rng.gen_range(0..g), rng.gen_range(0..g), rng.gen_range(0..g)];
        return (OpKind::Insert, point_query(p, spec.pad_columns));
    } else {
        // A line: one free coordinate.
        let axis = rng.gen_range(0..3);
        tokens = (0..3).map(|_| value(rng.gen_range(0..g))).collect();
        tokens[axis] = QueryToken::Star;
        OpKind::Delete
    };
    tokens.extend((0..spec.pad_columns).map(|_| QueryToken::Star));
    (kind, Query::new(tokens))
}

/// Whitelist of the shapes [`draw_op`] produces.
fn workload_templates(pad: usize) -> (Vec<ColumnSpec>, Vec<PatternTemplate>, Vec<PatternTemplate>) {
    use TemplateToken::{Bound, Star};
    let k = 3 + pad;
    let columns = (0..k)
        .map(|i| ColumnSpec {
            name: if i < 3 {
                ["x", "y", "z"][i].to_owned()
            } else {
                format!("pad{}", i - 3)
            },
            range_bits: None,
        })
        .collect();
    let shape = |axis: usize, on_axis: TemplateToken, off_axis: TemplateToken, pad_token: TemplateToken| {
        let mut t: Vec<TemplateToken> = (0..3).map(|i| if i == axis { on_axis } else { off_axis }).collect();
        t.extend((0..pad).map(|_| pad_token));
        PatternTemplate(t)
    };
    let reads = (0..3).map(|a| shape(a, Bound, Star, Star)).collect();
    let mut writes: Vec<PatternTemplate> = vec![shape(0, Bound, Bound, Bound)];
    writes.extend((0..3).map(|a| shape(a, Star, Bound, Star)));
    (columns, reads, writes)
}

fn build_scheme(spec: &WorkloadSpec, schema: &Schema) -> Result<Arc<dyn DependencyScheme>, HarnessError> {
    Ok(match spec.scheme {
        SchemeKind::Full => Arc::new(FullScheme::new(schema.clone())),
        SchemeKind::Trimmed => {
            let (columns, reads, writes) = workload_templates(spec.pad_columns);
            Arc::new(trim_with_columns(columns, &reads, &writes))
        }
        SchemeKind::Projected => Arc::new(ProjectedScheme::new(schema, Projection::new(vec![0, 1, 2], spec.k())?)?),
    })
}

pub fn run_workload(spec: &WorkloadSpec) -> Result<RunOutput, HarnessError> {
    spec.validate()?;
    let pacer: Arc<dyn Pacer> = match spec.scheduler {
        SchedulerKind::Virtual => Arc::new(VirtualScheduler::new(spec.workers, spec.seed, spec.latency)),
        SchedulerKind::Threads => Arc::new(ThreadPacer::new()),
    };
    let clock: Arc<dyn Clock> = Arc::new(PacerClock::new(pacer.clone()));
    let schema = Schema::numeric(spec.k())?;
    let table = Arc::new(Table::new(schema.clone(), clock.clone()));
    for p in initial_points(spec.grid, spec.initial_fill) {
        table.insert(&point_of(&point_query(p, spec.pad_columns)))?;
    }
    let cache_config = CacheConfig {
        horizon: Duration::from_millis(spec.horizon_ms),
        capacity: None,
        ledger: false,
    };
    let shared = Shared {
        spec: spec.clone(),
        pacer: pacer.clone(),
        table,
        local: Arc::new(MemoryCache::new(cache_config.clone(), clock.clone())),
        global: Arc::new(MemoryCache::new(cache_config, clock)),
        scheme: build_scheme(spec, &schema)?,
    };
    let frontends = (0..spec.workers)
        .map(|w| frontend(&shared, w))
        .collect::<Result<Vec<_>, _>>()?;

    let results: Vec<Result<WorkerTally, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = frontends
            .into_iter()
            .enumerate()
            .map(|(w, f)| {
                let shared = &shared;
                s.spawn(move || {
                    let _turn = Turn::begin(&*shared.pacer, w);
                    run_worker(shared, w, &f)
                })
            })
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(w, h)| h.join().unwrap_or(Err(HarnessError::Worker(w))))
            .collect()
    });
    let tallies = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(spec, tallies))
}

fn frontend(shared: &Shared, worker: usize) -> Result<Frontend, HarnessError> {
    let spec = &shared.spec;
    let skew_us = spec.skew_ms as i64 * 1000;
    let offset = if skew_us == 0 {
        0
    } else {
        worker_rng(spec.seed, worker, Stream::Skew).gen_range(-skew_us..=skew_us)
    };
    let clock = Arc::new(PacerClock::skewed(shared.pacer.clone(), offset));
    let db = ScheduledDb::new(shared.table.clone(), shared.pacer.clone());
    let local = ScheduledCache::new(shared.local.clone(), shared.pacer.clone());
    let global = ScheduledCache::new(shared.global.clone(), shared.pacer.clone());
    Ok(match spec.strategy {
        Strategy::Revision => {
            let config = WrapperConfig {
                version_compare: spec.version_compare,
                record_snapshots: true,
                ..WrapperConfig::default()
            };
            Frontend::Revision(CacheDb::with_scheme(
                Arc::new(db),
                Arc::new(local),
                Arc::new(global),
                clock,
                shared.scheme.clone(),
                config,
            )?)
        }
        Strategy::Naive => Frontend::Naive { db, cache: global },
        Strategy::None => Frontend::Direct(db),
    })
}

fn run_worker(shared: &Shared, worker: usize, front: &Frontend) -> Result<WorkerTally, HarnessError> {
    let spec = &shared.spec;
    let table = &shared.table;
    let mut ops = worker_rng(spec.seed, worker, Stream::Ops);
    let mut evictions = worker_rng(spec.seed, worker, Stream::Evictions);
    let mut tally = WorkerTally {
        events: Vec::with_capacity(spec.ops_per_worker),
        ..WorkerTally::default()
    };
    for index in 0..spec.ops_per_worker {
        let (kind, q) = draw_op(spec, &mut ops);
        let mut event = OpEvent::new(worker, index, kind, &q);
        event.invoke_us = shared.pacer.now_micros();
        event.invoke_seq = table.current_seq();
        match kind {
            OpKind::Select => {
                let served = front.select(&q)?;
                event.return_us = shared.pacer.now_micros();
                event.return_seq = table.current_seq();
                event.snapshot = served.snapshot;
                event.source = Some(served.source);
                event.digest = Some(rows_digest(&served.rows));
                tally.max_recursion_depth = tally.max_recursion_depth.max(served.recursion_depth);
                tally.bypassed += u64::from(served.bypassed);
                match served.source {
                    Source::Local => tally.served_local += 1,
                    Source::Global => tally.served_global += 1,
                    Source::Database => {}
                }
                if event.is_hit() {
                    let verdict = table.with_log(|log| {
                        judge_select(
                            &q,
                            &served.rows,
                            served.snapshot.unwrap_or(0),
                            event.invoke_seq,
                            event.return_seq,
                            event.invoke_us,
                            log,
                        )
                    });
                    if let Verdict::Stale { age_us } = verdict {
                        event.stale_age_us = Some(age_us);
                        tally.stale_ages.push(age_us);
                    }
                    if spec.workers == 1 {
                        let truth = table.select(&q)?.rows;
                        tally.oracle_mismatches += u64::from(rows_digest(&truth) != rows_digest(&served.rows));
                    }
                }
            }
            OpKind::Insert | OpKind::Delete => {
                let (affected, seq) = front.write(kind, &q)?;
                event.return_us = shared.pacer.now_micros();
                event.return_seq = table.current_seq();
                let committed = table.with_log(|log| log[seq as usize - 1].time_micros);
                event.write_seq = Some(seq);
                event.write_us = Some(committed);
                event.affected = Some(affected);
                tally.epsilon_us = tally.epsilon_us.max(event.return_us.saturating_sub(committed));
                if affected > 0 {
                    if kind == OpKind::Insert {
                        tally.inserts += 1;
                    } else {
                        tally.deletes += 1;
                    }
                }
            }
        }
        tally.events.push(event);
        if let EvictionSpec::Random { probability, target } = spec.evictions {
            if evictions.gen_bool(probability) {
                let caches: &[&MemoryCache] = match target {
                    EvictionTarget::Global => &[&shared.global],
                    EvictionTarget::Local => &[&shared.local],
                    EvictionTarget::Both => &[&shared.global, &shared.local],
                };
                for cache in caches {
                    match cache.inject_eviction_at(evictions.gen::<u32>() as usize) {
                        Some(outcome) if outcome.accepted() => tally.evictions_accepted += 1,
                        Some(_) => tally.evictions_refused += 1,
                        None => {}
                    }
                }
            }
        }
    }
    Ok(tally)
}

fn summarize(spec: &WorkloadSpec, tallies: Vec<WorkerTally>) -> RunOutput {
    let mut events: Vec<OpEvent> = Vec::with_capacity(spec.workers * spec.ops_per_worker);
    let mut stale_ages = Vec::new();
    let mut r = FreshnessReport::empty(spec);
    for t in tallies {
        events.extend(t.events);
        stale_ages.extend(t.stale_ages);
        r.inserts += t.inserts;
        r.deletes += t.deletes;
        r.epsilon_us = r.epsilon_us.max(t.epsilon_us);
        r.served_local += t.served_local;
        r.served_global += t.served_global;
        r.bypassed += t.bypassed;
        r.max_recursion_depth = r.max_recursion_depth.max(t.max_recursion_depth);
        r.evictions_accepted += t.evictions_accepted;
        r.evictions_refused += t.evictions_refused;
        r.oracle_mismatches += t.oracle_mismatches;
    }
    events.sort_by_key(|e| (e.return_us, e.worker, e.index));
    for e in events.iter().filter(|e| e.kind == OpKind::Select) {
        r.selects += 1;
        if e.is_hit() {
            r.cache_hits += 1;
        } else {
            r.cache_misses += 1;
        }
    }
    let naive = naive_shadow(&events);
    r.naive_hits = naive.hits;
    r.naive_misses = naive.misses;
    r.skew_allowance_us = 2 * spec.skew_ms * 1000;
    let bound = r.epsilon_us + r.skew_allowance_us;
    r.epsilon_violations = stale_ages.iter().filter(|&&a| a > bound).count() as u64;
    stale_ages.sort_unstable();
    r.stale = stale_ages.len() as u64;
    r.max_stale_age_us = stale_ages.last().copied().unwrap_or(0);
    r.median_stale_age_us = if stale_ages.is_empty() {
        0
    } else {
        stale_ages[(stale_ages.len() - 1) / 2]
    };
    r.fresh = r.cache_hits - r.stale;
    r.finish_ratios();
    RunOutput { events, report: r }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_is_evenly_spaced() {
        let pts = initial_points(10, 500);
        assert_eq!(pts.len(), 500);
        assert_eq!(pts[0], [0, 0, 0]);
        assert_eq!(pts[1], [0, 0, 2]);
        assert_eq!(initial_points(2, 8).len(), 8);
        assert_eq!(initial_points(3, 0).len(), 0);
        assert_eq!(initial_points(10, 300).len(), 250);
    }

    #[test]
    fn workload_shapes() {
        let spec = WorkloadSpec {
            pad_columns: 1,
            ..WorkloadSpec::default()
        };
        let mut rng = worker_rng(1, 0, Stream::Ops);
        for _ in 0..200 {
            let (kind, q) = draw_op(&spec, &mut rng);
            let constrained = q.constrained();
            match kind {
                OpKind::Select => assert_eq!(constrained, 1),
                OpKind::Insert => assert_eq!(constrained, 4),
                OpKind::Delete => assert_eq!(constrained, 2),
            }
            assert_eq!(q.tokens().len(), 4);
        }
    }

    fn small(strategy: Strategy, workers: usize) -> WorkloadSpec {
        WorkloadSpec {
            workers,
            ops_per_worker: 400,
            grid: 4,
            initial_fill: 20,
            strategy,
            mix: super::super::spec::OpMix::new(0.8, 0.1, 0.1),
            ..WorkloadSpec::default()
        }
    }

    #[test]
    fn single_worker_revision_run_is_fresh() {
        let out = run_workload(&small(Strategy::Revision, 1)).unwrap();
        let r = &out.report;
        assert_eq!(r.selects, r.cache_hits + r.cache_misses);
        assert!(r.cache_hits > 0);
        assert_eq!(r.stale, 0);
        assert_eq!(r.oracle_mismatches, 0);
        assert_eq!(out.events.len(), 400);
    }

    #[test]
    fn none_strategy_never_hits() {
        let r = run_workload(&small(Strategy::None, 3)).unwrap().report;
        assert_eq!(r.cache_hits, 0);
        assert_eq!(r.fresh_ratio, 1.0);
    }

    #[test]
    fn virtual_runs_are_reproducible() {
        let a = run_workload(&small(Strategy::Revision, 4)).unwrap();
        let b = run_workload(&small(Strategy::Revision, 4)).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.report, b.report);
        assert_eq!(a.report.epsilon_violations, 0);
    }

    #[test]
    fn thread_mode_completes() {
        let spec = WorkloadSpec {
            scheduler: SchedulerKind::Threads,
            ..small(Strategy::Revision, 3)
        };
        let r = run_workload(&spec).unwrap().report;
        assert_eq!(r.selects, r.cache_hits + r.cache_misses);
    }

    #[test]
    fn trimmed_and_projected_schemes_run() {
        for scheme in [SchemeKind::Trimmed, SchemeKind::Projected] {
            let spec = WorkloadSpec {
                scheme,
                pad_columns: 2,
                ..small(Strategy::Revision, 1)
            };
            let r = run_workload(&spec).unwrap().report;
            assert_eq!(r.stale, 0, "{scheme}");
        }
    }
}
