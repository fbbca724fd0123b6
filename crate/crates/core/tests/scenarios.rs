//! Scripted end-to-end scenarios for the caching wrapper.

use std::sync::Arc;
use std::time::Duration;

use revcache::cache::{Cache, CacheConfig, MemoryCache};
use revcache::cachedb::{revision_key_folded, CacheDb, Source, WrapperConfig};
use revcache::clock::ManualClock;
use revcache::model::{Pattern, Query, Record, Schema};
use revcache::table::{Database, Table};

struct Rig {
    clock: Arc<ManualClock>,
    table: Arc<Table>,
    local: Arc<MemoryCache>,
    global: Arc<MemoryCache>,
    db: CacheDb,
}

fn rig(horizon: Duration) -> Rig {
    let clock = Arc::new(ManualClock::new(1_600_000_000_000_000));
    let table = Arc::new(Table::new(Schema::numeric(3).unwrap(), clock.clone()));
    let config = CacheConfig {
        horizon,
        ..CacheConfig::default()
    };
    let local = Arc::new(MemoryCache::new(config.clone(), clock.clone()));
    let global = Arc::new(MemoryCache::new(config, clock.clone()));
    let db = CacheDb::new(
        table.clone(),
        local.clone(),
        global.clone(),
        clock.clone(),
        WrapperConfig::default(),
    )
    .unwrap();
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
fn played_table_reads_follow_writes() {
    let rig = rig(Duration::from_secs(3600));
    rig.db.insert(&r("2,2,0")).unwrap();
    rig.db.insert(&r("1,2,0")).unwrap();
    assert_eq!(rig.db.select(&q("*,2,0"), "").unwrap(), vec![r("1,2,0"), r("2,2,0")]);
    assert_eq!(rig.db.select_traced(&q("*,2,0"), "").unwrap().source, Source::Local);
    rig.db.delete(&q("2,*,*")).unwrap();
    assert_eq!(rig.db.select(&q("*,2,0"), "").unwrap(), vec![r("1,2,0")]);
    // A write to an unrelated game leaves the cached result usable.
    rig.db.insert(&r("5,9,9")).unwrap();
    assert_eq!(rig.db.select_traced(&q("*,2,0"), "").unwrap().source, Source::Local);
}

#[test]
fn evicted_counter_is_reminted_above_its_old_value() {
    let rig = rig(Duration::from_millis(10));
    rig.db.select(&q("1,*,*"), "").unwrap();
    let key = revision_key_folded(&"(1,*,*)".parse::<Pattern>().unwrap());
    for _ in 0..5 {
        rig.db.invalidate(&q("1,2,3")).unwrap();
    }
    let old: u64 = String::from_utf8(rig.global.get(&key).unwrap().unwrap())
        .unwrap()
        .parse()
        .unwrap();
    rig.clock.advance_ms(20);
    assert!(rig.global.inject_eviction(&key).accepted());
    rig.table.insert(&r("1,0,0")).unwrap();
    let out = rig.db.select_traced(&q("1,*,*"), "").unwrap();
    assert_eq!(out.source, Source::Database);
    assert_eq!(out.rows, vec![r("1,0,0")]);
    assert!(out.version.0[0] > old);
    assert_eq!(out.recursion_depth, 0);
}

#[test]
fn young_keys_refuse_eviction() {
    let rig = rig(Duration::from_millis(10));
    rig.db.select(&q("1,*,*"), "").unwrap();
    let key = revision_key_folded(&"(1,*,*)".parse::<Pattern>().unwrap());
    assert!(!rig.global.inject_eviction(&key).accepted());
}

#[test]
fn overlapping_disjunction_clauses_stay_fresh() {
    let rig = rig(Duration::from_secs(3600));
    // The first clause's subspace contains the second's.
    let clauses = [q("2,*,*"), q("2,7,*")];
    rig.db.insert(&r("2,7,1")).unwrap();
    let first = rig.db.select_any(&clauses, "").unwrap();
    assert_eq!(first.rows, vec![r("2,7,1")]);
    assert_eq!(rig.db.select_any(&clauses, "").unwrap().source, Source::Local);
    rig.db.delete_any(&[q("2,7,*")]).unwrap();
    let after = rig.db.select_any(&clauses, "").unwrap();
    assert_eq!(after.source, Source::Database);
    assert!(after.rows.is_empty());
    rig.db.insert(&r("2,0,0")).unwrap();
    assert_eq!(rig.db.select_any(&clauses, "").unwrap().rows, vec![r("2,0,0")]);
}

#[test]
fn flushed_local_cache_refills_from_global() {
    let rig = rig(Duration::from_secs(3600));
    rig.db.select(&q("*,*,4"), "").unwrap();
    rig.local.flush_all().unwrap();
    assert_eq!(rig.db.select_traced(&q("*,*,4"), "").unwrap().source, Source::Global);
    assert_eq!(rig.table.select(&q("*,*,4")).unwrap().rows, Vec::<Record>::new());
}
