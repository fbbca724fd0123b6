//! Concurrent workload simulation and the staleness oracle.
//!
//! Workers insert random grid points, delete random axis-aligned lines and
//! select random planes through a [`CacheDb`](crate::cachedb::CacheDb). Every
//! cache hit is judged against the table's write log at the moment it
//! returns, and the run is summarised in a [`FreshnessReport`].

pub mod judge;
pub mod report;
pub mod run;
pub mod sched;
pub mod spec;
pub mod wrappers;

use thiserror::Error;

use crate::cachedb::CacheDbError;
use crate::model::ModelError;
use crate::planner::PlanError;
use crate::table::DbError;

pub use judge::{judge_select, naive_shadow, NaiveTally, Verdict};
pub use report::{read_events, write_events, FreshnessReport, ReportDocument, ReportFormat};
pub use run::{run_workload, OpEvent, OpKind, RunOutput};
pub use sched::{worker_rng, Cost, Pacer, PacerClock, Stream, ThreadPacer, VirtualScheduler, VIRTUAL_EPOCH_MICROS};
pub use spec::{
    Delay, EvictionSpec, EvictionTarget, LatencyModel, OpMix, SchedulerKind, SchemeKind, Strategy, WorkloadSpec,
    STANDARD_MIXES,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid workload: {0}")]
    Config(String),
    #[error(transparent)]
    CacheDb(#[from] CacheDbError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("worker {0} panicked")]
    Worker(usize),
    #[error("malformed report: {0}")]
    Report(String),
}
