//! Tracks which algorithm invocations are still executing.
//!
//! Keys written during an invocation must not be evicted until it returns;
//! the in-memory backend consults this registry before honoring an injected
//! eviction.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InvocationId(u64);

static NEXT_ID: AtomicU64 = AtomicU64::new(1);
static ACTIVE: Mutex<BTreeSet<u64>> = Mutex::new(BTreeSet::new());

thread_local! {
    static CURRENT: Cell<Option<u64>> = const { Cell::new(None) };
}

/// Marks the current thread as executing one invocation until dropped.
/// Nested guards join the outermost invocation.
#[must_use]
#[derive(Debug)]
pub struct InvocationGuard {
    owned: Option<u64>,
}

impl InvocationGuard {
    pub fn id(&self) -> Option<InvocationId> {
        current()
    }
}

pub fn begin() -> InvocationGuard {
    if CURRENT.with(Cell::get).is_some() {
        return InvocationGuard { owned: None };
    }
    let id = NEXT_ID.fetch_add(1, Ordering::Relaxed);
    ACTIVE.lock().unwrap_or_else(|e| e.into_inner()).insert(id);
    CURRENT.with(|c| c.set(Some(id)));
    InvocationGuard { owned: Some(id) }
}

impl Drop for InvocationGuard {
    fn drop(&mut self) {
        if let Some(id) = self.owned {
            CURRENT.with(|c| c.set(None));
            ACTIVE.lock().unwrap_or_else(|e| e.into_inner()).remove(&id);
        }
    }
}

pub fn current() -> Option<InvocationId> {
    CURRENT.with(Cell::get).map(InvocationId)
}

pub fn is_active(id: InvocationId) -> bool {
    ACTIVE.lock().unwrap_or_else(|e| e.into_inner()).contains(&id.0)
}
