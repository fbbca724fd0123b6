//! Deterministic in-process cache with a horizon-respecting eviction model.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::inflight::{self, InvocationId};
use super::{parse_counter, Cache, CacheError, CacheKey, CacheValue};
use crate::clock::Clock;

#[derive(Debug, Clone)]
pub struct CacheConfig {
    /// Minimum age before a key may be evicted.
    pub horizon: Duration,
    /// Maximum number of entries; `None` means unbounded.
    pub capacity: Option<usize>,
    /// Record every successful write in a [`ShadowLedger`].
    pub ledger: bool,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            horizon: Duration::from_secs(3600),
            capacity: None,
            ledger: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvictionOutcome {
    Accepted,
    /// Key younger than the horizon.
    TooYoung,
    /// The invocation that stored the key has not returned yet.
    WriterInFlight,
    Absent,
}

impl EvictionOutcome {
    pub fn accepted(self) -> bool {
        self == EvictionOutcome::Accepted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WriteOp {
    Set,
    Add,
    Increment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub time_micros: u64,
    pub op: WriteOp,
    pub value: CacheValue,
}

/// Append-only log of successful writes per key.
#[derive(Debug, Default, Clone)]
pub struct ShadowLedger {
    entries: BTreeMap<CacheKey, Vec<LedgerEntry>>,
}

impl ShadowLedger {
    fn record(&mut self, key: &CacheKey, time_micros: u64, op: WriteOp, value: &[u8]) {
        self.entries.entry(key.clone()).or_default().push(LedgerEntry {
            time_micros,
            op,
            value: value.to_vec(),
        });
    }

    pub fn log(&self, key: &CacheKey) -> &[LedgerEntry] {
        self.entries.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn keys(&self) -> impl Iterator<Item = &CacheKey> {
        self.entries.keys()
    }

    /// Largest numeric value successfully assigned to `key` strictly before
    /// `t`, or 0 when none was.
    pub fn real_revision(&self, key: &CacheKey, t_micros: u64) -> u64 {
        self.log(key)
            .iter()
            .filter(|e| e.time_micros < t_micros)
            .filter_map(|e| parse_counter(&e.value).ok())
            .max()
            .unwrap_or(0)
    }

    /// Keys (among those accepted by `filter`) whose numeric writes are not
    /// strictly increasing.
    pub fn non_monotone_keys(&self, filter: impl Fn(&CacheKey) -> bool) -> Vec<CacheKey> {
        self.entries
            .iter()
            .filter(|(k, _)| filter(k))
            .filter(|(_, log)| {
                log.windows(2)
                    .any(|w| match (parse_counter(&w[0].value), parse_counter(&w[1].value)) {
                        (Ok(a), Ok(b)) => b <= a,
                        _ => true,
                    })
            })
            .map(|(k, _)| k.clone())
            .collect()
    }
}

/// Operation counters, for asserting per-call key budgets.
#[derive(Debug, Default)]
struct Counters {
    gets: AtomicU64,
    multigets: AtomicU64,
    keys_fetched: AtomicU64,
    sets: AtomicU64,
    adds: AtomicU64,
    increments: AtomicU64,
    deletes: AtomicU64,
    flushes: AtomicU64,
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub gets: u64,
    pub multigets: u64,
    /// Keys read by `get` plus keys read by `multiget`.
    pub keys_fetched: u64,
    pub sets: u64,
    pub adds: u64,
    pub increments: u64,
    pub deletes: u64,
    pub flushes: u64,
}

impl std::ops::Sub for CacheStats {
    type Output = CacheStats;

    fn sub(self, o: CacheStats) -> CacheStats {
        CacheStats {
            gets: self.gets - o.gets,
            multigets: self.multigets - o.multigets,
            keys_fetched: self.keys_fetched - o.keys_fetched,
            sets: self.sets - o.sets,
            adds: self.adds - o.adds,
            increments: self.increments - o.increments,
            deletes: self.deletes - o.deletes,
            flushes: self.flushes - o.flushes,
        }
    }
}

#[derive(Debug)]
struct Slot {
    value: CacheValue,
    stored_at: u64,
    writer: Option<InvocationId>,
}

#[derive(Debug)]
pub struct MemoryCache {
    config: CacheConfig,
    clock: Arc<dyn Clock>,
    slots: Mutex<IndexMap<CacheKey, Slot>>,
    ledger: Option<Mutex<ShadowLedger>>,
    counters: Counters,
}

impl MemoryCache {
    pub fn new(config: CacheConfig, clock: Arc<dyn Clock>) -> Self {
        let ledger = config.ledger.then(|| Mutex::new(ShadowLedger::default()));
        MemoryCache {
            config,
            clock,
            slots: Mutex::new(IndexMap::new()),
            ledger,
            counters: Counters::default(),
        }
    }

    fn slots(&self) -> MutexGuard<'_, IndexMap<CacheKey, Slot>> {
        self.slots.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn log_write(&self, key: &CacheKey, now: u64, op: WriteOp, value: &[u8]) {
        if let Some(ledger) = &self.ledger {
            ledger
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .record(key, now, op, value);
        }
    }

    fn eligibility(&self, slot: &Slot, now: u64) -> EvictionOutcome {
        let horizon = self.config.horizon.as_micros() as u64;
        if now.saturating_sub(slot.stored_at) < horizon {
            EvictionOutcome::TooYoung
        } else if slot.writer.is_some_and(inflight::is_active) {
            EvictionOutcome::WriterInFlight
        } else {
            EvictionOutcome::Accepted
        }
    }

    fn store(&self, slots: &mut IndexMap<CacheKey, Slot>, key: &CacheKey, value: &[u8], now: u64) {
        if !slots.contains_key(key) {
            if let Some(cap) = self.config.capacity {
                if slots.len() >= cap {
                    self.evict_oldest(slots, now);
                }
            }
        }
        slots.insert(
            key.clone(),
            Slot {
                value: value.to_vec(),
                stored_at: now,
                writer: inflight::current(),
            },
        );
    }

    // Oldest eligible key goes first; if nothing is eligible the cache grows
    // past capacity rather than break the horizon.
    fn evict_oldest(&self, slots: &mut IndexMap<CacheKey, Slot>, now: u64) {
        let victim = slots
            .iter()
            .enumerate()
            .filter(|(_, (_, s))| self.eligibility(s, now).accepted())
            .min_by_key(|(i, (_, s))| (s.stored_at, *i))
            .map(|(i, _)| i);
        if let Some(i) = victim {
            slots.swap_remove_index(i);
        }
    }

    /// Evicts `key` if the horizon contract allows it.
    pub fn inject_eviction(&self, key: &CacheKey) -> EvictionOutcome {
        let now = self.clock.now_micros();
        let mut slots = self.slots();
        let outcome = match slots.get(key) {
            None => EvictionOutcome::Absent,
            Some(slot) => self.eligibility(slot, now),
        };
        if outcome.accepted() {
            slots.swap_remove(key);
        }
        outcome
    }

    /// Attempts to evict the key currently stored at position `index`
    /// (modulo the number of keys). Returns `None` on an empty cache.
    pub fn inject_eviction_at(&self, index: usize) -> Option<EvictionOutcome> {
        let key = {
            let slots = self.slots();
            if slots.is_empty() {
                return None;
            }
            slots.get_index(index % slots.len()).map(|(k, _)| k.clone())?
        };
        Some(self.inject_eviction(&key))
    }

    pub fn len(&self) -> usize {
        self.slots().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        let c = &self.counters;
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        CacheStats {
            gets: l(&c.gets),
            multigets: l(&c.multigets),
            keys_fetched: l(&c.keys_fetched),
            sets: l(&c.sets),
            adds: l(&c.adds),
            increments: l(&c.increments),
            deletes: l(&c.deletes),
            flushes: l(&c.flushes),
        }
    }

    /// Snapshot of the write ledger, when enabled.
    pub fn ledger(&self) -> Option<ShadowLedger> {
        self.ledger
            .as_ref()
            .map(|l| l.lock().unwrap_or_else(|e| e.into_inner()).clone())
    }

    pub fn contains(&self, key: &CacheKey) -> bool {
        self.slots().contains_key(key)
    }
}

impl Cache for MemoryCache {
    fn get(&self, key: &CacheKey) -> Result<Option<CacheValue>, CacheError> {
        self.counters.gets.fetch_add(1, Ordering::Relaxed);
        self.counters.keys_fetched.fetch_add(1, Ordering::Relaxed);
        Ok(self.slots().get(key).map(|s| s.value.clone()))
    }

    fn multiget(&self, keys: &[CacheKey]) -> Result<Vec<Option<CacheValue>>, CacheError> {
        self.counters.multigets.fetch_add(1, Ordering::Relaxed);
        self.counters
            .keys_fetched
            .fetch_add(keys.len() as u64, Ordering::Relaxed);
        let slots = self.slots();
        Ok(keys.iter().map(|k| slots.get(k).map(|s| s.value.clone())).collect())
    }

    fn set(&self, key: &CacheKey, value: &[u8]) -> Result<(), CacheError> {
        self.counters.sets.fetch_add(1, Ordering::Relaxed);
        let now = self.clock.now_micros();
        let mut slots = self.slots();
        self.store(&mut slots, key, value, now);
        self.log_write(key, now, WriteOp::Set, value);
        Ok(())
    }

    fn add(&self, key: &CacheKey, value: &[u8]) -> Result<bool, CacheError> {
        self.counters.adds.fetch_add(1, Ordering::Relaxed);
        let now = self.clock.now_micros();
        let mut slots = self.slots();
        if slots.contains_key(key) {
            return Ok(false);
        }
        self.store(&mut slots, key, value, now);
        self.log_write(key, now, WriteOp::Add, value);
        Ok(true)
    }

    fn increment(&self, key: &CacheKey) -> Result<Option<u64>, CacheError> {
        self.counters.increments.fetch_add(1, Ordering::Relaxed);
        let now = self.clock.now_micros();
        let mut slots = self.slots();
        let Some(slot) = slots.get_mut(key) else {
            return Ok(None);
        };
        let next = parse_counter(&slot.value)?.wrapping_add(1);
        slot.value = next.to_string().into_bytes();
        self.log_write(key, now, WriteOp::Increment, &slot.value);
        Ok(Some(next))
    }

    fn delete(&self, key: &CacheKey) -> Result<bool, CacheError> {
        self.counters.deletes.fetch_add(1, Ordering::Relaxed);
        Ok(self.slots().swap_remove(key).is_some())
    }

    fn flush_all(&self) -> Result<(), CacheError> {
        self.counters.flushes.fetch_add(1, Ordering::Relaxed);
        self.slots().clear();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn key(s: &str) -> CacheKey {
        CacheKey::new(s).unwrap()
    }

    fn cache(horizon_ms: u64) -> (Arc<ManualClock>, MemoryCache) {
        let clock = Arc::new(ManualClock::new(1_000_000));
        let config = CacheConfig {
            horizon: Duration::from_millis(horizon_ms),
            capacity: None,
            ledger: true,
        };
        (clock.clone(), MemoryCache::new(config, clock))
    }

    #[test]
    fn get_set_and_miss() {
        let (_, c) = cache(10);
        assert_eq!(c.get(&key("a")).unwrap(), None);
        c.set(&key("a"), b"5").unwrap();
        assert_eq!(c.get(&key("a")).unwrap(), Some(b"5".to_vec()));
    }

    #[test]
    fn increment_semantics() {
        let (_, c) = cache(10);
        assert_eq!(c.increment(&key("n")).unwrap(), None);
        assert!(!c.contains(&key("n")));
        c.set(&key("n"), b"7").unwrap();
        assert_eq!(c.increment(&key("n")).unwrap(), Some(8));
        c.set(&key("m"), b"abc").unwrap();
        assert!(matches!(c.increment(&key("m")), Err(CacheError::NonNumeric)));
        c.set(&key("max"), u64::MAX.to_string().as_bytes()).unwrap();
        assert_eq!(c.increment(&key("max")).unwrap(), Some(0));
    }

    #[test]
    fn eviction_respects_horizon() {
        let (clock, c) = cache(10);
        c.set(&key("a"), b"1").unwrap();
        assert_eq!(c.inject_eviction(&key("a")), EvictionOutcome::TooYoung);
        clock.advance_ms(10);
        assert_eq!(c.inject_eviction(&key("a")), EvictionOutcome::Accepted);
        assert_eq!(c.get(&key("a")).unwrap(), None);
        assert_eq!(c.inject_eviction(&key("a")), EvictionOutcome::Absent);
    }

    #[test]
    fn eviction_waits_for_writer_to_finish() {
        let (clock, c) = cache(1);
        let guard = inflight::begin();
        c.add(&key("a"), b"1").unwrap();
        clock.advance_ms(5);
        assert_eq!(c.inject_eviction(&key("a")), EvictionOutcome::WriterInFlight);
        drop(guard);
        assert_eq!(c.inject_eviction(&key("a")), EvictionOutcome::Accepted);
    }

    #[test]
    fn capacity_evicts_oldest_eligible() {
        let clock = Arc::new(ManualClock::new(0));
        let c = MemoryCache::new(
            CacheConfig {
                horizon: Duration::from_millis(1),
                capacity: Some(2),
                ledger: false,
            },
            clock.clone(),
        );
        c.set(&key("a"), b"1").unwrap();
        clock.advance_ms(1);
        c.set(&key("b"), b"2").unwrap();
        clock.advance_ms(1);
        c.set(&key("c"), b"3").unwrap();
        assert!(!c.contains(&key("a")));
        assert!(c.contains(&key("b")) && c.contains(&key("c")));
        // nothing old enough: grow instead of breaking the horizon
        c.set(&key("d"), b"4").unwrap();
        c.set(&key("e"), b"5").unwrap();
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn ledger_tracks_real_revision() {
        let (clock, c) = cache(10);
        assert!(c.add(&key("r"), b"100").unwrap());
        clock.advance_ms(1);
        c.increment(&key("r")).unwrap();
        let ledger = c.ledger().unwrap();
        assert_eq!(ledger.real_revision(&key("r"), 1_000_000), 0);
        assert_eq!(ledger.real_revision(&key("r"), 1_000_001), 100);
        assert_eq!(ledger.real_revision(&key("r"), u64::MAX), 101);
        assert!(ledger.non_monotone_keys(|_| true).is_empty());
        c.set(&key("r"), b"5").unwrap();
        assert_eq!(c.ledger().unwrap().non_monotone_keys(|_| true), vec![key("r")]);
    }

    #[test]
    fn stats_count_fetched_keys() {
        let (_, c) = cache(10);
        c.multiget(&[key("a"), key("b"), key("a")]).unwrap();
        c.get(&key("a")).unwrap();
        let s = c.stats();
        assert_eq!((s.multigets, s.gets, s.keys_fetched), (1, 1, 4));
    }
}
