//! Interleaving of worker threads.
//!
//! Under the virtual scheduler every worker runs on its own OS thread but
//! only one runs at a time. Each worker owns a virtual clock; `pause(cost)`
//! advances it and hands control to the worker with the smallest clock
//! (ties broken by id), so an operation's effect lands at the end of its
//! delay and the whole run is a pure function of the seed.

use std::cell::Cell;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::spec::LatencyModel;
use crate::clock::{Clock, SystemClock};

/// Virtual time origin: 2020-09-13, in microseconds since the epoch.
pub const VIRTUAL_EPOCH_MICROS: u64 = 1_600_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cost {
    Cache,
    DbRead,
    DbWrite,
    WriteGap,
}

thread_local! {
    static WORKER: Cell<Option<usize>> = const { Cell::new(None) };
}

pub fn current_worker() -> Option<usize> {
    WORKER.with(Cell::get)
}

pub trait Pacer: Send + Sync + std::fmt::Debug {
    /// Called on the worker's thread before its first operation.
    fn enter(&self, worker: usize);
    /// Called when the worker has finished, including by unwinding.
    fn leave(&self, worker: usize);
    /// Spends the delay for one step of the calling worker.
    fn pause(&self, cost: Cost);
    /// Unskewed time as seen by the calling thread.
    fn now_micros(&self) -> u64;
}

#[derive(Debug)]
struct State {
    times: Vec<u64>,
    done: Vec<bool>,
    running: Option<usize>,
    rngs: Vec<ChaCha8Rng>,
}

impl State {
    fn next(&self) -> Option<usize> {
        (0..self.times.len())
            .filter(|&i| !self.done[i])
            .min_by_key(|&i| (self.times[i], i))
    }
}

#[derive(Debug)]
pub struct VirtualScheduler {
    state: Mutex<State>,
    turns: Vec<Condvar>,
    latency: LatencyModel,
}

/// Random streams reserved per worker, in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Latency,
    Ops,
    Evictions,
    Skew,
}

pub fn worker_rng(seed: u64, worker: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4 * worker as u64 + stream as u64);
    rng
}

impl VirtualScheduler {
    pub fn new(workers: usize, seed: u64, latency: LatencyModel) -> Self {
        VirtualScheduler {
            state: Mutex::new(State {
                times: vec![0; workers],
                done: vec![false; workers],
                running: (workers > 0).then_some(0),
                rngs: (0..workers).map(|w| worker_rng(seed, w, Stream::Latency)).collect(),
            }),
            turns: (0..workers).map(|_| Condvar::new()).collect(),
            latency,
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn wait_turn<'a>(&self, mut st: MutexGuard<'a, State>, me: usize) -> MutexGuard<'a, State> {
        while st.running != Some(me) {
            st = self.turns[me].wait(st).unwrap_or_else(|e| e.into_inner());
        }
        st
    }

    fn hand_off(&self, st: &mut State) {
        st.running = st.next();
        if let Some(n) = st.running {
            self.turns[n].notify_one();
        }
    }

    /// Advances the calling worker's clock without drawing from its stream.
    pub fn advance(&self, micros: u64) {
        let me = current_worker().expect("advance outside a worker");
        let mut st = self.lock();
        st.times[me] += micros;
        if st.next() != Some(me) {
            self.hand_off(&mut st);
            drop(self.wait_turn(st, me));
        }
    }

    pub fn worker_time(&self, worker: usize) -> u64 {
        VIRTUAL_EPOCH_MICROS + self.lock().times[worker]
    }
}

impl Pacer for VirtualScheduler {
    fn enter(&self, worker: usize) {
        WORKER.with(|w| w.set(Some(worker)));
        drop(self.wait_turn(self.lock(), worker));
    }

    fn leave(&self, worker: usize) {
        let mut st = self.lock();
        st.done[worker] = true;
        if st.running == Some(worker) {
            self.hand_off(&mut st);
        }
        WORKER.with(|w| w.set(None));
    }

    fn pause(&self, cost: Cost) {
        let me = current_worker().expect("pause outside a worker");
        let micros = {
            let mut st = self.lock();
            let delay = match cost {
                Cost::Cache => self.latency.cache,
                Cost::DbRead => self.latency.db_read,
                Cost::DbWrite => self.latency.db_write,
                Cost::WriteGap => self.latency.write_gap,
            };
            delay.sample(&mut st.rngs[me])
        };
        self.advance(micros);
    }

    fn now_micros(&self) -> u64 {
        match current_worker() {
            Some(w) => self.worker_time(w),
            None => VIRTUAL_EPOCH_MICROS + self.lock().times.iter().copied().max().unwrap_or(0),
        }
    }
}

/// Real threads: pauses only yield.
#[derive(Debug, Default)]
pub struct ThreadPacer {
    clock: SystemClock,
}

impl ThreadPacer {
    pub fn new() -> Self {
        ThreadPacer::default()
    }
}

impl Pacer for ThreadPacer {
    fn enter(&self, worker: usize) {
        WORKER.with(|w| w.set(Some(worker)));
    }

    fn leave(&self, _worker: usize) {
        WORKER.with(|w| w.set(None));
    }

    fn pause(&self, _cost: Cost) {
        std::thread::yield_now();
    }

    fn now_micros(&self) -> u64 {
        self.clock.now_micros()
    }
}

/// Time according to a pacer, shifted by a per-worker offset.
#[derive(Debug, Clone)]
pub struct PacerClock {
    pacer: Arc<dyn Pacer>,
    offset_micros: i64,
}

impl PacerClock {
    pub fn new(pacer: Arc<dyn Pacer>) -> Self {
        PacerClock {
            pacer,
            offset_micros: 0,
        }
    }

    pub fn skewed(pacer: Arc<dyn Pacer>, offset_micros: i64) -> Self {
        PacerClock { pacer, offset_micros }
    }
}

impl Clock for PacerClock {
    fn now_micros(&self) -> u64 {
        self.pacer.now_micros().saturating_add_signed(self.offset_micros)
    }
}

/// Calls [`Pacer::leave`] on drop.
pub struct Turn<'a> {
    pacer: &'a dyn Pacer,
    worker: usize,
}

impl<'a> Turn<'a> {
    pub fn begin(pacer: &'a dyn Pacer, worker: usize) -> Self {
        pacer.enter(worker);
        Turn { pacer, worker }
    }
}

impl Drop for Turn<'_> {
    fn drop(&mut self) {
        self.pacer.leave(self.worker);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::spec::Delay;

    #[test]
    fn interleaves_by_virtual_time() {
        let latency = LatencyModel {
            cache: Delay::fixed(10),
            db_read: Delay::fixed(25),
            ..LatencyModel::default()
        };
        let sched = Arc::new(VirtualScheduler::new(2, 1, latency));
        let log = Arc::new(Mutex::new(Vec::new()));
        let handles: Vec<_> = (0..2)
            .map(|w| {
                let sched = sched.clone();
                let log = log.clone();
                std::thread::spawn(move || {
                    let _turn = Turn::begin(&*sched, w);
                    for _ in 0..3 {
                        sched.pause(if w == 0 { Cost::Cache } else { Cost::DbRead });
                        log.lock().unwrap().push((w, sched.now_micros() - VIRTUAL_EPOCH_MICROS));
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        let got = log.lock().unwrap().clone();
        assert_eq!(got, vec![(0, 10), (0, 20), (1, 25), (0, 30), (1, 50), (1, 75)]);
    }

    #[test]
    fn panicking_worker_does_not_wedge_others() {
        let sched = Arc::new(VirtualScheduler::new(2, 1, LatencyModel::default()));
        let a = {
            let sched = sched.clone();
            std::thread::spawn(move || {
                let _turn = Turn::begin(&*sched, 0);
                panic!("boom");
            })
        };
        let b = {
            let sched = sched.clone();
            std::thread::spawn(move || {
                let _turn = Turn::begin(&*sched, 1);
                sched.pause(Cost::Cache);
                7
            })
        };
        assert!(a.join().is_err());
        assert_eq!(b.join().unwrap(), 7);
    }
}
