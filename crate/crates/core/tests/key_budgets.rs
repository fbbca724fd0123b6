//! Per-call cache traffic of the wrapper under random operations.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revcache::cache::{CacheConfig, MemoryCache};
use revcache::cachedb::{CacheDb, WrapperConfig};
use revcache::clock::ManualClock;
use revcache::model::{FieldValue, Query, QueryToken, Record, Schema};
use revcache::table::Table;

const K: usize = 3;

fn random_query(rng: &mut ChaCha8Rng) -> Query {
    Query::new(
        (0..K)
            .map(|_| {
                if rng.gen_bool(0.5) {
                    QueryToken::Star
                } else {
                    QueryToken::Value(FieldValue::from(rng.gen_range(0..4u32)))
                }
            })
            .collect(),
    )
}

#[test]
fn ten_thousand_random_operations_stay_within_budget() {
    let clock = Arc::new(ManualClock::new(1_600_000_000_000_000));
    let table = Arc::new(Table::new(Schema::numeric(K).unwrap(), clock.clone()));
    let local = Arc::new(MemoryCache::new(CacheConfig::default(), clock.clone()));
    let global = Arc::new(MemoryCache::new(CacheConfig::default(), clock.clone()));
    let db = CacheDb::new(
        table,
        local.clone(),
        global.clone(),
        clock.clone(),
        WrapperConfig::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let read_budget = (1u64 << (K + 1)) + 1;
    let (mut selects, mut writes) = (0, 0);
    for _ in 0..10_000 {
        clock.advance_micros(rng.gen_range(0..50));
        let before = global.stats();
        let local_before = local.stats();
        match rng.gen_range(0..10) {
            0..=5 => {
                let q = random_query(&mut rng);
                let out = db.select_traced(&q, "").unwrap();
                let used = global.stats() - before;
                let local_used = local.stats() - local_before;
                let probes = 1u64 << q.constrained();
                assert!(used.keys_fetched <= read_budget, "{q}: {used:?}");
                // One multiget of the probes, then the result key only when
                // the local cache missed.
                let local_hit = local_used.gets == 1 && out.source == revcache::cachedb::Source::Local;
                assert_eq!(used.multigets, 1);
                assert_eq!(used.keys_fetched, probes + u64::from(!local_hit), "{q}: {used:?}");
                assert_eq!(used.increments, 0);
                selects += 1;
            }
            6..=7 => {
                let q = random_query(&mut rng);
                let out = db.delete(&q).unwrap();
                let used = global.stats() - before;
                assert_eq!(out.increments, 1 << K);
                assert_eq!(used.increments, 1 << K, "{q}");
                assert_eq!(used.keys_fetched, 0);
                writes += 1;
            }
            _ => {
                let r = Record::new((0..K).map(|_| FieldValue::from(rng.gen_range(0..4u32))).collect());
                let out = db.insert(&r).unwrap();
                let used = global.stats() - before;
                assert_eq!(out.increments, 1 << K);
                assert_eq!(used.increments, 1 << K);
                writes += 1;
            }
        }
    }
    assert!(selects > 5000 && writes > 3000);
}

#[test]
fn explicit_invalidate_touches_exactly_two_to_the_k_counters() {
    let clock = Arc::new(ManualClock::new(0));
    let table = Arc::new(Table::new(Schema::numeric(K).unwrap(), clock.clone()));
    let cache = Arc::new(MemoryCache::new(CacheConfig::default(), clock.clone()));
    let db = CacheDb::new(table, cache.clone(), cache.clone(), clock, WrapperConfig::default()).unwrap();
    for text in ["*,*,*", "1,*,*", "1,2,*", "1,2,3"] {
        let before = cache.stats();
        assert_eq!(db.invalidate(&text.parse().unwrap()).unwrap(), 8);
        assert_eq!((cache.stats() - before).increments, 8);
    }
}
