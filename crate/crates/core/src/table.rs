//! The authoritative store: a set of k-dimensional records with subspace
//! select/delete and point insert.
//!
//! Every write call gets the next sequence number and is appended to a write
//! log together with the rows it changed, so an observer can reconstruct the
//! contents of any subspace at any past sequence number.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::model::{ModelError, Query, Record, Schema};

#[derive(Debug, Error)]
pub enum DbError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("database unavailable: {0}")]
    Unavailable(String),
}

/// Rows returned by a select, with the write sequence number they reflect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Sorted ascending.
    pub rows: Vec<Record>,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteReceipt {
    /// Rows inserted or removed; 0 for a duplicate insert or empty delete.
    pub affected: usize,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Change {
    Inserted(Record),
    /// Insert of a record already present.
    Duplicate(Record),
    Deleted(Vec<Record>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteLogEntry {
    pub seq: u64,
    pub time_micros: u64,
    pub query: Query,
    pub change: Change,
}

/// Single-statement atomic access to a table.
pub trait Database: Send + Sync {
    fn schema(&self) -> &Schema;
    fn select(&self, query: &Query) -> Result<Snapshot, DbError>;
    /// Rows matching any of the clauses.
    fn select_any(&self, clauses: &[Query]) -> Result<Snapshot, DbError>;
    fn insert(&self, record: &Record) -> Result<WriteReceipt, DbError>;
    fn delete(&self, query: &Query) -> Result<WriteReceipt, DbError>;
}

#[derive(Debug, Default)]
struct TableState {
    rows: BTreeSet<Record>,
    seq: u64,
    log: Vec<WriteLogEntry>,
}

#[derive(Debug)]
pub struct Table {
    schema: Schema,
    clock: Arc<dyn Clock>,
    state: Mutex<TableState>,
}

impl Table {
    pub fn new(schema: Schema, clock: Arc<dyn Clock>) -> Self {
        Table {
            schema,
            clock,
            state: Mutex::new(TableState::default()),
        }
    }

    fn state(&self) -> MutexGuard<'_, TableState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn current_seq(&self) -> u64 {
        self.state().seq
    }

    pub fn len(&self) -> usize {
        self.state().rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> Vec<Record> {
        self.state().rows.iter().cloned().collect()
    }

    /// Log entries with `from < seq <= to`.
    pub fn log_range(&self, from: u64, to: u64) -> Vec<WriteLogEntry> {
        let st = self.state();
        st.log
            .iter()
            .skip_while(|e| e.seq <= from)
            .take_while(|e| e.seq <= to)
            .cloned()
            .collect()
    }

    pub fn write_log(&self) -> Vec<WriteLogEntry> {
        self.state().log.clone()
    }

    /// Runs `f` over the write log without copying it. Entry `i` has
    /// sequence number `i + 1`.
    pub fn with_log<T>(&self, f: impl FnOnce(&[WriteLogEntry]) -> T) -> T {
        f(&self.state().log)
    }

    fn append(&self, st: &mut TableState, query: Query, change: Change) -> u64 {
        st.seq += 1;
        let seq = st.seq;
        st.log.push(WriteLogEntry {
            seq,
            time_micros: self.clock.now_micros(),
            query,
            change,
        });
        seq
    }
}

impl Database for Table {
    fn schema(&self) -> &Schema {
        &self.schema
    }

    fn select(&self, query: &Query) -> Result<Snapshot, DbError> {
        self.select_any(std::slice::from_ref(query))
    }

    fn select_any(&self, clauses: &[Query]) -> Result<Snapshot, DbError> {
        for q in clauses {
            self.schema.check(q)?;
        }
        let st = self.state();
        let rows = st
            .rows
            .iter()
            .filter(|r| clauses.iter().any(|q| q.contains_unchecked(r)))
            .cloned()
            .collect();
        Ok(Snapshot { rows, seq: st.seq })
    }

    fn insert(&self, record: &Record) -> Result<WriteReceipt, DbError> {
        self.schema.check(record)?;
        let mut st = self.state();
        let fresh = st.rows.insert(record.clone());
        let change = if fresh {
            Change::Inserted(record.clone())
        } else {
            Change::Duplicate(record.clone())
        };
        let seq = self.append(&mut st, record.to_query(), change);
        Ok(WriteReceipt {
            affected: usize::from(fresh),
            seq,
        })
    }

    fn delete(&self, query: &Query) -> Result<WriteReceipt, DbError> {
        self.schema.check(query)?;
        let mut st = self.state();
        let removed: Vec<Record> = st
            .rows
            .iter()
            .filter(|r| query.contains_unchecked(r))
            .cloned()
            .collect();
        for r in &removed {
            st.rows.remove(r);
        }
        let affected = removed.len();
        let seq = self.append(&mut st, query.clone(), Change::Deleted(removed));
        Ok(WriteReceipt { affected, seq })
    }
}

impl<D: Database + ?Sized> Database for Arc<D> {
    fn schema(&self) -> &Schema {
        (**self).schema()
    }
    fn select(&self, query: &Query) -> Result<Snapshot, DbError> {
        (**self).select(query)
    }
    fn select_any(&self, clauses: &[Query]) -> Result<Snapshot, DbError> {
        (**self).select_any(clauses)
    }
    fn insert(&self, record: &Record) -> Result<WriteReceipt, DbError> {
        (**self).insert(record)
    }
    fn delete(&self, query: &Query) -> Result<WriteReceipt, DbError> {
        (**self).delete(query)
    }
}
