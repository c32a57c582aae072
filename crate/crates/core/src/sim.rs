//! Deterministic discrete-event core: integer-nanosecond clock, a
//! `(fire_at, sequence)` ordered event queue, and labelled RNG streams.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

/// Simulated time in integer nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    /// Rounds up to the next nanosecond.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * 1e9).ceil().max(0.0) as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Time to clock `bytes` onto a link of `rate_bps`, rounded up to the next
/// nanosecond.
pub fn serialization_delay(bytes: u64, rate_bps: u64) -> SimTime {
    debug_assert!(rate_bps > 0);
    let bits = bytes as u128 * 8 * 1_000_000_000;
    let rate = rate_bps as u128;
    SimTime(bits.div_ceil(rate) as u64)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("event scheduled in the past: fire_at {fire_at} < clock {clock}")]
    InPast { fire_at: SimTime, clock: SimTime },
}

/// Identifies a scheduled event by its insertion sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(pub u64);

/// A popped event.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduled<T> {
    pub fire_at: SimTime,
    pub sequence: u64,
    pub payload: T,
}

struct Entry<T> {
    fire_at: SimTime,
    sequence: u64,
    payload: T,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.sequence == other.sequence
    }
}

impl<T> Eq for Entry<T> {}

impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Entry<T> {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Pending events ordered by `(fire_at, sequence)`, plus the virtual clock.
pub struct EventQueue<T> {
    heap: BinaryHeap<Entry<T>>,
    clock: SimTime,
    next_sequence: u64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            clock: SimTime::ZERO,
            next_sequence: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: T) -> Result<EventHandle, ScheduleError> {
        if fire_at < self.clock {
            return Err(ScheduleError::InPast {
                fire_at,
                clock: self.clock,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Entry {
            fire_at,
            sequence,
            payload,
        });
        Ok(EventHandle(sequence))
    }

    /// Schedules `delay` after the current clock; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, payload: T) -> EventHandle {
        let at = self.clock + delay;
        self.schedule(at, payload)
            .expect("relative schedule is never in the past")
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|e| e.fire_at)
    }

    /// Pops the next event if it fires at or before `end`, advancing the clock.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Scheduled<T>> {
        match self.heap.peek() {
            Some(e) if e.fire_at <= end => {}
            _ => return None,
        }
        let e = self.heap.pop()?;
        self.clock = e.fire_at;
        Some(Scheduled {
            fire_at: e.fire_at,
            sequence: e.sequence,
            payload: e.payload,
        })
    }

    /// Iterates pending payloads in no particular order.
    pub fn pending(&self) -> impl Iterator<Item = &T> {
        self.heap.iter().map(|e| &e.payload)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunSummary {
    pub events: u64,
    pub clock: SimTime,
}

/// Drains every event with `fire_at <= end`, handing each to `handler`.
pub fn run_until<T, F>(queue: &mut EventQueue<T>, end: SimTime, mut handler: F) -> RunSummary
where
    F: FnMut(&mut EventQueue<T>, Scheduled<T>),
{
    let mut events = 0;
    while let Some(ev) = queue.pop_until(end) {
        events += 1;
        handler(queue, ev);
    }
    RunSummary {
        events,
        clock: queue.now().min(end),
    }
}

/// 64-bit FNV-1a. Stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a consumer seed from the master seed and a fixed label.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    mix64(master ^ mix64(fnv1a64(label.as_bytes())))
}

/// Incremental order-sensitive digest of an event trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceDigest(u64);

impl Default for TraceDigest {
    fn default() -> Self {
        TraceDigest(0xcbf2_9ce4_8422_2325)
    }
}

impl TraceDigest {
    pub fn absorb(&mut self, word: u64) {
        self.0 = mix64(self.0 ^ word).wrapping_mul(0x0000_0100_0000_01b3);
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RngError {
    #[error("uniform range is inverted or not finite: [{lo}, {hi})")]
    BadRange { lo: f64, hi: f64 },
    #[error("exponential mean must be positive and finite, got {0}")]
    BadMean(f64),
}

/// Seeded random stream.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for one consumer; adding consumers never perturbs
    /// existing ones.
    pub fn stream(master: u64, label: &str) -> Self {
        SimRng::new(derive_seed(master, label))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[lo, hi)`; `lo == hi` returns `lo`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, RngError> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(RngError::BadRange { lo, hi });
        }
        if lo == hi {
            return Ok(lo);
        }
        let u: f64 = self.inner.random();
        let v = lo + (hi - lo) * u;
        // Rounding can land exactly on hi.
        Ok(if v >= hi { lo } else { v })
    }

    pub fn exponential(&mut self, mean: f64) -> Result<f64, RngError> {
        if !(mean.is_finite() && mean > 0.0) {
            return Err(RngError::BadMean(mean));
        }
        let exp = Exp::new(1.0 / mean).map_err(|_| RngError::BadMean(mean))?;
        Ok(exp.sample(&mut self.inner))
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random::<f64>() < p
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn processing_order_is_sorted_and_clock_monotone(
            times in proptest::collection::vec(0u64..1_000, 1..200)
        ) {
            let mut q = EventQueue::new();
            for t in &times {
                q.schedule(SimTime::from_nanos(*t), ()).unwrap();
            }
            let mut log = Vec::new();
            run_until(&mut q, SimTime::MAX, |_, ev| log.push((ev.fire_at, ev.sequence)));
            let mut sorted = log.clone();
            sorted.sort();
            prop_assert_eq!(&log, &sorted);
            prop_assert!(log.windows(2).all(|w| w[0].0 <= w[1].0));
        }
    }
}
