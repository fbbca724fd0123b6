//! Query-result caching for a single k-dimensional table, kept fresh with
//! generational revision counters stored in a shared cache.

pub mod cache;
pub mod cachedb;
pub mod clock;
pub mod harness;
pub mod model;
pub mod planner;
pub mod table;
pub mod variants;
pub mod verify;
