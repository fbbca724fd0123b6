//! The caching wrapper: reads are served from a local or global cache when
//! the cached entry's version is current, writes go to the table and then
//! increment every revision counter that a dependent read could be probing.
//!
//! Revision counters live only in the global cache. A missing counter is
//! re-created with `now_ms * max_queries_per_time_step`, which exceeds any
//! value it could have held before it was evicted.

pub mod entry;
pub mod keys;
pub mod scheme;
pub mod version;

use std::sync::Arc;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{inflight, parse_counter, Cache, CacheError, CacheKey};
use crate::clock::Clock;
use crate::model::{ModelError, Pattern, Query, Record};
use crate::table::{Database, DbError, Snapshot};

pub use entry::{CachedEntry, DecodeError};
pub use keys::{digest, digest_clauses, revision_key, revision_key_folded};
pub use scheme::{DependencyScheme, FullScheme, SchemeError};
pub use version::{Version, VersionCompare};

/// Milliseconds from the Unix epoch to 2200-01-01T00:00:00Z.
pub const YEAR_2200_MS: u64 = 7_258_118_400_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapperConfig {
    pub max_queries_per_time_step: u64,
    pub version_compare: VersionCompare,
    /// Invalidate even when a write changed no rows.
    pub invalidate_on_noop: bool,
    /// Nested re-fetches allowed in `get_revisions` before giving up.
    pub max_recursion_depth: usize,
    /// Tries per increment when the cache reports I/O errors.
    pub increment_attempts: usize,
    /// Store the table sequence number in cached entries.
    pub record_snapshots: bool,
}

impl Default for WrapperConfig {
    fn default() -> Self {
        WrapperConfig {
            max_queries_per_time_step: 1000,
            version_compare: VersionCompare::PartialOrder,
            invalidate_on_noop: true,
            max_recursion_depth: 4,
            increment_attempts: 3,
            record_snapshots: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum CacheDbError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Database(#[from] DbError),
    #[error("revision {key} vanished {depth} times in a row; the cache evicts keys before the horizon")]
    HorizonViolation { key: CacheKey, depth: usize },
    #[error("could not increment {key}: {source}")]
    InvalidationFailed { key: CacheKey, source: CacheError },
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Local,
    Global,
    Database,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectOutcome {
    pub rows: Vec<Record>,
    pub source: Source,
    /// Table sequence number the rows reflect, when known.
    pub snapshot: Option<u64>,
    pub version: Version,
    /// Nested re-fetches performed while reading revisions.
    pub recursion_depth: usize,
    /// The revision counters were unreachable and the cache was skipped.
    pub bypassed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteOutcome {
    pub affected: usize,
    pub seq: u64,
    pub increments: usize,
}

enum RevisionError {
    Io,
    Fatal(CacheDbError),
}

pub struct CacheDb {
    db: Arc<dyn Database>,
    local: Arc<dyn Cache>,
    global: Arc<dyn Cache>,
    clock: Arc<dyn Clock>,
    scheme: Arc<dyn DependencyScheme>,
    config: WrapperConfig,
}

impl std::fmt::Debug for CacheDb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CacheDb")
            .field("scheme", &self.scheme)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl CacheDb {
    pub fn new(
        db: Arc<dyn Database>,
        local: Arc<dyn Cache>,
        global: Arc<dyn Cache>,
        clock: Arc<dyn Clock>,
        config: WrapperConfig,
    ) -> Result<Self, CacheDbError> {
        let scheme = Arc::new(FullScheme::new(db.schema().clone()));
        Self::with_scheme(db, local, global, clock, scheme, config)
    }

    pub fn with_scheme(
        db: Arc<dyn Database>,
        local: Arc<dyn Cache>,
        global: Arc<dyn Cache>,
        clock: Arc<dyn Clock>,
        scheme: Arc<dyn DependencyScheme>,
        config: WrapperConfig,
    ) -> Result<Self, CacheDbError> {
        check_config(&config, clock.now_ms())?;
        Ok(CacheDb {
            db,
            local,
            global,
            clock,
            scheme,
            config,
        })
    }

    pub fn config(&self) -> &WrapperConfig {
        &self.config
    }

    pub fn database(&self) -> &Arc<dyn Database> {
        &self.db
    }

    pub fn select(&self, q: &Query, extra: &str) -> Result<Vec<Record>, CacheDbError> {
        Ok(self.select_traced(q, extra)?.rows)
    }

    pub fn select_traced(&self, q: &Query, extra: &str) -> Result<SelectOutcome, CacheDbError> {
        let _guard = inflight::begin();
        let patterns = self.scheme.probe_patterns(q)?;
        self.select_with(&patterns, &digest(q, extra), || self.db.select(q))
    }

    /// Select over a disjunction of clauses.
    pub fn select_any(&self, clauses: &[Query], extra: &str) -> Result<SelectOutcome, CacheDbError> {
        let _guard = inflight::begin();
        let mut patterns = IndexSet::new();
        for c in clauses {
            patterns.extend(self.scheme.probe_patterns(c)?);
        }
        let patterns: Vec<Pattern> = patterns.into_iter().collect();
        self.select_with(&patterns, &digest_clauses(clauses, extra), || {
            self.db.select_any(clauses)
        })
    }

    fn select_with(
        &self,
        patterns: &[Pattern],
        result_key: &CacheKey,
        read_db: impl FnOnce() -> Result<Snapshot, DbError>,
    ) -> Result<SelectOutcome, CacheDbError> {
        let keys: Vec<CacheKey> = patterns.iter().map(revision_key_folded).collect();
        let (version, depth) = match self.get_revisions(&keys, 0) {
            Ok((revs, depth)) => (Version(revs), depth),
            Err(RevisionError::Fatal(e)) => return Err(e),
            Err(RevisionError::Io) => {
                let snap = read_db()?;
                return Ok(SelectOutcome {
                    rows: snap.rows,
                    source: Source::Database,
                    snapshot: Some(snap.seq),
                    version: Version::default(),
                    recursion_depth: 0,
                    bypassed: true,
                });
            }
        };

        if let Some(hit) = self.probe(&*self.local, result_key, &version) {
            return Ok(self.outcome(hit, Source::Local, version, depth));
        }
        if let Some((hit, bytes)) = self.probe_raw(&*self.global, result_key, &version) {
            let _ = self.local.set(result_key, &bytes);
            return Ok(self.outcome(hit, Source::Global, version, depth));
        }

        let snap = read_db()?;
        let entry = CachedEntry {
            version: version.clone(),
            snapshot: self.config.record_snapshots.then_some(snap.seq),
            rows: snap.rows,
        };
        let bytes = entry.encode();
        let _ = self.global.set(result_key, &bytes);
        let _ = self.local.set(result_key, &bytes);
        Ok(SelectOutcome {
            rows: entry.rows,
            source: Source::Database,
            snapshot: Some(snap.seq),
            version,
            recursion_depth: depth,
            bypassed: false,
        })
    }

    fn outcome(&self, hit: CachedEntry, source: Source, version: Version, depth: usize) -> SelectOutcome {
        SelectOutcome {
            rows: hit.rows,
            source,
            snapshot: hit.snapshot,
            version,
            recursion_depth: depth,
            bypassed: false,
        }
    }

    fn probe(&self, cache: &dyn Cache, key: &CacheKey, version: &Version) -> Option<CachedEntry> {
        self.probe_raw(cache, key, version).map(|(e, _)| e)
    }

    fn probe_raw(&self, cache: &dyn Cache, key: &CacheKey, version: &Version) -> Option<(CachedEntry, Vec<u8>)> {
        let bytes = cache.get(key).ok().flatten()?;
        let entry = CachedEntry::decode(&bytes).ok()?;
        entry
            .version
            .satisfies(version, self.config.version_compare)
            .then_some((entry, bytes))
    }

    /// Reads the revision of every key, minting missing ones with `add`.
    /// When another caller wins the `add`, its value is fetched instead of
    /// using ours.
    fn get_revisions(&self, keys: &[CacheKey], depth: usize) -> Result<(Vec<u64>, usize), RevisionError> {
        let values = self.global.multiget(keys).map_err(|_| RevisionError::Io)?;
        let mut revisions = vec![0u64; keys.len()];
        let mut missing = Vec::new();
        for (i, v) in values.into_iter().enumerate() {
            match v {
                Some(bytes) => revisions[i] = parse_counter(&bytes).map_err(|_| RevisionError::Io)?,
                None => missing.push(i),
            }
        }
        if missing.is_empty() {
            return Ok((revisions, depth));
        }
        let monotone = self
            .clock
            .now_ms()
            .saturating_mul(self.config.max_queries_per_time_step);
        let text = monotone.to_string();
        let mut lost = Vec::new();
        for i in missing {
            match self.global.add(&keys[i], text.as_bytes()) {
                Ok(true) => revisions[i] = monotone,
                Ok(false) => lost.push(i),
                Err(_) => return Err(RevisionError::Io),
            }
        }
        if lost.is_empty() {
            return Ok((revisions, depth));
        }
        if depth + 1 > self.config.max_recursion_depth {
            return Err(RevisionError::Fatal(CacheDbError::HorizonViolation {
                key: keys[lost[0]].clone(),
                depth: depth + 1,
            }));
        }
        let retry: Vec<CacheKey> = lost.iter().map(|&i| keys[i].clone()).collect();
        let (fetched, reached) = self.get_revisions(&retry, depth + 1)?;
        for (slot, value) in lost.into_iter().zip(fetched) {
            revisions[slot] = value;
        }
        Ok((revisions, reached))
    }

    /// Increments the revision of every pattern a write to `q` can affect.
    /// Returns the number of increments issued.
    pub fn invalidate(&self, q: &Query) -> Result<usize, CacheDbError> {
        let _guard = inflight::begin();
        let patterns = self.scheme.increment_patterns(q)?;
        for p in &patterns {
            let key = revision_key_folded(p);
            let mut attempt = 1;
            loop {
                match self.global.increment(&key) {
                    Ok(_) => break,
                    Err(e) if e.is_io() && attempt < self.config.increment_attempts => attempt += 1,
                    Err(source) => return Err(CacheDbError::InvalidationFailed { key, source }),
                }
            }
        }
        Ok(patterns.len())
    }

    pub fn insert(&self, record: &Record) -> Result<WriteOutcome, CacheDbError> {
        let _guard = inflight::begin();
        let receipt = self.db.insert(record)?;
        self.after_write(&record.to_query(), receipt.affected, receipt.seq)
    }

    pub fn delete(&self, q: &Query) -> Result<WriteOutcome, CacheDbError> {
        let _guard = inflight::begin();
        let receipt = self.db.delete(q)?;
        self.after_write(q, receipt.affected, receipt.seq)
    }

    /// Deletes every clause of a disjunction, invalidating each one.
    pub fn delete_any(&self, clauses: &[Query]) -> Result<WriteOutcome, CacheDbError> {
        let _guard = inflight::begin();
        let mut total = WriteOutcome {
            affected: 0,
            seq: 0,
            increments: 0,
        };
        for c in clauses {
            let one = self.delete(c)?;
            total.affected += one.affected;
            total.seq = one.seq;
            total.increments += one.increments;
        }
        Ok(total)
    }

    fn after_write(&self, q: &Query, affected: usize, seq: u64) -> Result<WriteOutcome, CacheDbError> {
        let increments = if affected > 0 || self.config.invalidate_on_noop {
            self.invalidate(q)?
        } else {
            0
        };
        Ok(WriteOutcome {
            affected,
            seq,
            increments,
        })
    }
}

fn check_config(config: &WrapperConfig, now_ms: u64) -> Result<(), CacheDbError> {
    if config.max_queries_per_time_step == 0 {
        return Err(CacheDbError::Config(
            "max_queries_per_time_step must be positive".into(),
        ));
    }
    if config.max_recursion_depth == 0 || config.increment_attempts == 0 {
        return Err(CacheDbError::Config(
            "max_recursion_depth and increment_attempts must be positive".into(),
        ));
    }
    let limit = 1u64 << 63;
    let fits = |ms: u64| {
        ms.checked_mul(config.max_queries_per_time_step)
            .is_some_and(|v| v < limit)
    };
    if !fits(YEAR_2200_MS.max(now_ms)) {
        return Err(CacheDbError::Config(format!(
            "max_queries_per_time_step {} overflows 63 bits before the year 2200",
            config.max_queries_per_time_step
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{CacheConfig, MemoryCache};
    use crate::clock::ManualClock;
    use crate::model::Schema;
    use crate::table::Table;

    struct Rig {
        clock: Arc<ManualClock>,
        table: Arc<Table>,
        local: Arc<MemoryCache>,
        global: Arc<MemoryCache>,
        db: CacheDb,
    }

    fn rig(config: WrapperConfig) -> Rig {
        let clock = Arc::new(ManualClock::new(1_600_000_000_000_000));
        let table = Arc::new(Table::new(Schema::numeric(3).unwrap(), clock.clone()));
        let local = Arc::new(MemoryCache::new(CacheConfig::default(), clock.clone()));
        let global = Arc::new(MemoryCache::new(CacheConfig::default(), clock.clone()));
        let db = CacheDb::new(table.clone(), local.clone(), global.clone(), clock.clone(), config).unwrap();
        Rig {
            clock,
            table,
            local,
            global,
            db,
        }
    }

    fn q(s: &str) -> Query {
        s.parse().unwrap()
    }

    fn r(s: &str) -> Record {
        s.parse().unwrap()
    }

    #[test]
    fn cold_then_local_then_invalidated() {
        let rig = rig(WrapperConfig::default());
        rig.db.insert(&r("2,2,0")).unwrap();
        let first = rig.db.select_traced(&q("*,2,0"), "").unwrap();
        assert_eq!(first.source, Source::Database);
        assert_eq!(first.rows, vec![r("2,2,0")]);
        let second = rig.db.select_traced(&q("*,2,0"), "").unwrap();
        assert_eq!(second.source, Source::Local);
        rig.clock.advance_ms(1);
        rig.db.delete(&q("2,*,*")).unwrap();
        let third = rig.db.select_traced(&q("*,2,0"), "").unwrap();
        assert_eq!(third.source, Source::Database);
        assert!(third.rows.is_empty());
    }

    #[test]
    fn global_hit_refills_local() {
        let rig = rig(WrapperConfig::default());
        rig.db.select(&q("1,*,*"), "").unwrap();
        rig.local.flush_all().unwrap();
        assert_eq!(rig.db.select_traced(&q("1,*,*"), "").unwrap().source, Source::Global);
        assert_eq!(rig.db.select_traced(&q("1,*,*"), "").unwrap().source, Source::Local);
    }

    #[test]
    fn missing_revisions_are_minted_from_the_clock() {
        let rig = rig(WrapperConfig::default());
        let out = rig.db.select_traced(&q("*,3,2"), "").unwrap();
        let minted = 1_600_000_000_000 * 1000;
        assert_eq!(out.version, Version(vec![minted; 4]));
        assert_eq!(out.recursion_depth, 0);
        rig.db.invalidate(&q("*,3,2")).unwrap();
        let again = rig.db.select_traced(&q("*,3,2"), "").unwrap();
        assert_eq!(again.version.0[0], minted + 1);
    }

    #[test]
    fn lost_add_fetches_the_winner() {
        let rig = rig(WrapperConfig::default());
        let key = revision_key_folded(&"(1,2,3)".parse().unwrap());
        // Model a concurrent reader that minted the key between our multiget and add.
        struct Racer {
            inner: Arc<MemoryCache>,
            key: CacheKey,
        }
        impl Cache for Racer {
            fn get(&self, k: &CacheKey) -> Result<Option<Vec<u8>>, CacheError> {
                self.inner.get(k)
            }
            fn multiget(&self, k: &[CacheKey]) -> Result<Vec<Option<Vec<u8>>>, CacheError> {
                self.inner.multiget(k)
            }
            fn set(&self, k: &CacheKey, v: &[u8]) -> Result<(), CacheError> {
                self.inner.set(k, v)
            }
            fn add(&self, k: &CacheKey, v: &[u8]) -> Result<bool, CacheError> {
                if k == &self.key && !self.inner.contains(k) {
                    self.inner.add(k, b"77")?;
                }
                self.inner.add(k, v)
            }
            fn increment(&self, k: &CacheKey) -> Result<Option<u64>, CacheError> {
                self.inner.increment(k)
            }
            fn delete(&self, k: &CacheKey) -> Result<bool, CacheError> {
                self.inner.delete(k)
            }
            fn flush_all(&self) -> Result<(), CacheError> {
                self.inner.flush_all()
            }
        }
        let racer = Arc::new(Racer {
            inner: rig.global.clone(),
            key,
        });
        let db = CacheDb::new(
            rig.table.clone(),
            rig.local.clone(),
            racer,
            rig.clock.clone(),
            WrapperConfig::default(),
        )
        .unwrap();
        let out = db.select_traced(&q("1,2,3"), "").unwrap();
        assert_eq!(out.version.0[0], 77);
        assert_eq!(out.recursion_depth, 1);
    }

    #[test]
    fn invalidate_counts_and_noop_flag() {
        let rig = rig(WrapperConfig::default());
        assert_eq!(rig.db.invalidate(&q("*,2,3")).unwrap(), 8);
        assert_eq!(rig.db.delete(&q("9,9,*")).unwrap().increments, 8);

        let lazy = rig_lazy();
        assert_eq!(lazy.db.delete(&q("9,9,*")).unwrap().increments, 0);
        assert_eq!(lazy.db.insert(&r("1,1,1")).unwrap().increments, 8);
        assert_eq!(lazy.db.insert(&r("1,1,1")).unwrap().increments, 0);
    }

    fn rig_lazy() -> Rig {
        rig(WrapperConfig {
            invalidate_on_noop: false,
            ..WrapperConfig::default()
        })
    }

    #[test]
    fn increments_of_missing_keys_are_ignored() {
        let rig = rig(WrapperConfig::default());
        rig.db.invalidate(&q("1,1,1")).unwrap();
        assert!(rig.global.is_empty());
    }

    #[test]
    fn exact_mode_rejects_newer_entries() {
        let rig = rig(WrapperConfig {
            version_compare: VersionCompare::ExactEquality,
            ..WrapperConfig::default()
        });
        rig.db.select(&q("1,*,*"), "").unwrap();
        assert_eq!(rig.db.select_traced(&q("1,*,*"), "").unwrap().source, Source::Local);
    }

    #[test]
    fn garbage_entry_is_a_miss() {
        let rig = rig(WrapperConfig::default());
        rig.db.select(&q("1,*,*"), "").unwrap();
        let key = digest(&q("1,*,*"), "");
        rig.local.set(&key, b"garbage").unwrap();
        rig.global.set(&key, b"gke1 v=1").unwrap();
        assert_eq!(rig.db.select_traced(&q("1,*,*"), "").unwrap().source, Source::Database);
    }

    #[test]
    fn headroom_check() {
        let bad = WrapperConfig {
            max_queries_per_time_step: 10_000_000,
            ..WrapperConfig::default()
        };
        let clock = Arc::new(ManualClock::new(0));
        let table = Arc::new(Table::new(Schema::numeric(1).unwrap(), clock.clone()));
        let c = Arc::new(MemoryCache::new(CacheConfig::default(), clock.clone()));
        assert!(matches!(
            CacheDb::new(table, c.clone(), c, clock, bad),
            Err(CacheDbError::Config(_))
        ));
    }
}
