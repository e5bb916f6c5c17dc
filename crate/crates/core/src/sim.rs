//! Discrete-event engine: integer nanosecond time, an ordered action queue
//! and seeded random streams.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time (or duration) in integer nanoseconds.
#[derive(
    Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_add(rhs.0).map(SimTime)
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;

    /// Panics on overflow: time never wraps.
    fn add(self, rhs: SimTime) -> SimTime {
        self.checked_add(rhs)
            .unwrap_or_else(|| panic!("SimTime overflow: {} + {}", self.0, rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .unwrap_or_else(|| panic!("SimTime underflow: {} - {}", self.0, rhs.0)),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("cannot schedule at {at}: simulation time is already {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

/// Identity of the component an action is addressed to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentId(pub u32);

#[derive(Debug, Clone)]
pub struct ScheduledAction<P> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub target: ComponentId,
    pub payload: P,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionHandle {
    pub fire_at: SimTime,
    pub sequence: u64,
}

struct Entry<P>(ScheduledAction<P>);

impl<P> Entry<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_at, self.0.sequence)
    }
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    // BinaryHeap is a max-heap; invert so the earliest (fire_at, sequence) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Single-threaded event queue. Actions fire in `(fire_at, sequence)` order;
/// the sequence is the insertion counter, so equal-time actions run FIFO.
pub struct Scheduler<P> {
    now: SimTime,
    next_sequence: u64,
    executed: u64,
    queue: BinaryHeap<Entry<P>>,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_sequence: 0,
            executed: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Total number of actions executed since construction.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|e| e.0.fire_at)
    }

    pub fn schedule(
        &mut self,
        at: SimTime,
        target: ComponentId,
        payload: P,
    ) -> Result<ActionHandle, SimError> {
        if at < self.now {
            return Err(SimError::SchedulingInPast { at, now: self.now });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Entry(ScheduledAction {
            fire_at: at,
            sequence,
            target,
            payload,
        }));
        Ok(ActionHandle {
            fire_at: at,
            sequence,
        })
    }

    /// Executes every action with `fire_at <= t_end`, including actions
    /// scheduled by the handler along the way, then sets `now` to `t_end`.
    /// A `t_end` in the past executes nothing and leaves time untouched.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Scheduler<P>, ScheduledAction<P>),
    {
        if t_end < self.now {
            return 0;
        }
        let mut count = 0;
        while self.peek_time().is_some_and(|t| t <= t_end) {
            count += self.step(&mut handler) as u64;
        }
        self.now = t_end;
        count
    }

    /// Runs until the queue is empty.
    pub fn run_to_completion<F>(&mut self, mut handler: F) -> u64
    where
        F: FnMut(&mut Scheduler<P>, ScheduledAction<P>),
    {
        let mut count = 0;
        while !self.queue.is_empty() {
            count += self.step(&mut handler) as u64;
        }
        count
    }

    fn step<F>(&mut self, handler: &mut F) -> bool
    where
        F: FnMut(&mut Scheduler<P>, ScheduledAction<P>),
    {
        let Some(Entry(action)) = self.queue.pop() else {
            return false;
        };
        debug_assert!(action.fire_at >= self.now);
        self.now = action.fire_at;
        self.executed += 1;
        handler(self, action);
        true
    }
}

/// Portable seeded random stream; the same seed yields the same sequence on
/// every platform.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
