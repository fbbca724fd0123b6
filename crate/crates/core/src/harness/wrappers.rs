//! Cache and database adapters that spend simulated latency before each call.

use std::sync::Arc;

use super::sched::{Cost, Pacer};
use crate::cache::{Cache, CacheError, CacheKey, CacheValue};
use crate::model::{Query, Record, Schema};
use crate::table::{Database, DbError, Snapshot, WriteReceipt};

#[derive(Clone)]
pub struct ScheduledCache {
    inner: Arc<dyn Cache>,
    pacer: Arc<dyn Pacer>,
}

impl ScheduledCache {
    pub fn new(inner: Arc<dyn Cache>, pacer: Arc<dyn Pacer>) -> Self {
        ScheduledCache { inner, pacer }
    }
}

impl Cache for ScheduledCache {
    fn get(&self, key: &CacheKey) -> Result<Option<CacheValue>, CacheError> {
        self.pacer.pause(Cost::Cache);
        self.inner.get(key)
    }

    fn multiget(&self, keys: &[CacheKey]) -> Result<Vec<Option<CacheValue>>, CacheError> {
        self.pacer.pause(Cost::Cache);
        self.inner.multiget(keys)
    }

    fn set(&self, key: &CacheKey, value: &[u8]) -> Result<(), CacheError> {
        self.pacer.pause(Cost::Cache);
        self.inner.set(key, value)
    }

    fn add(&self, key: &CacheKey, value: &[u8]) -> Result<bool, CacheError> {
        self.pacer.pause(Cost::Cache);
        self.inner.add(key, value)
    }

    fn increment(&self, key: &CacheKey) -> Result<Option<u64>, CacheError> {
        self.pacer.pause(Cost::Cache);
        self.inner.increment(key)
    }

    fn delete(&self, key: &CacheKey) -> Result<bool, CacheError> {
        self.pacer.pause(Cost::Cache);
        self.inner.delete(key)
    }

    fn flush_all(&self) -> Result<(), CacheError> {
        self.pacer.pause(Cost::Cache);
        self.inner.flush_all()
    }
}

/// Writes pay the write latency before taking effect and the write gap
/// after, so the invalidation that follows starts later still.
pub struct ScheduledDb {
    inner: Arc<dyn Database>,
    pacer: Arc<dyn Pacer>,
}

impl ScheduledDb {
    pub fn new(inner: Arc<dyn Database>, pacer: Arc<dyn Pacer>) -> Self {
        ScheduledDb { inner, pacer }
    }

    fn write<T>(&self, op: impl FnOnce() -> T) -> T {
        self.pacer.pause(Cost::DbWrite);
        let out = op();
        self.pacer.pause(Cost::WriteGap);
        out
    }
}

impl Database for ScheduledDb {
    fn schema(&self) -> &Schema {
        self.inner.schema()
    }

    fn select(&self, query: &Query) -> Result<Snapshot, DbError> {
        self.pacer.pause(Cost::DbRead);
        self.inner.select(query)
    }

    fn select_any(&self, clauses: &[Query]) -> Result<Snapshot, DbError> {
        self.pacer.pause(Cost::DbRead);
        self.inner.select_any(clauses)
    }

    fn insert(&self, record: &Record) -> Result<WriteReceipt, DbError> {
        self.write(|| self.inner.insert(record))
    }

    fn delete(&self, query: &Query) -> Result<WriteReceipt, DbError> {
        self.write(|| self.inner.delete(query))
    }
}
