//! Discrete-event kernel: virtual clock, event queue and the seeded generator
//! every other module draws randomness from.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time in microseconds since scenario start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond; negative or NaN input maps to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime(0);
        }
        SimTime((s * 1e6).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        self.saturating_sub(rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("cannot schedule at {at} when the clock reads {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

/// Handle returned by [`Scheduler::schedule`]; the value is the insertion counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

struct Entry<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.cmp(&self.at).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Single-threaded event queue. Events at equal times run in insertion order.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Entry<E>>,
    cancelled: HashSet<u64>,
    executed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            executed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events still queued (cancelled ones included until popped).
    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len().min(self.queue.len())
    }

    /// Total events executed over the scheduler's lifetime.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    pub fn schedule(&mut self, at: SimTime, event: E) -> Result<EventId, SimError> {
        if at < self.now {
            return Err(SimError::SchedulingInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Entry { at, seq, event });
        Ok(EventId(seq))
    }

    pub fn schedule_in(&mut self, delay: SimTime, event: E) -> EventId {
        let at = self.now + delay;
        self.schedule(at, event)
            .expect("a non-negative delay is never in the past")
    }

    /// Returns false if the event already ran or was never scheduled.
    pub fn cancel(&mut self, id: EventId) -> bool {
        if id.0 >= self.next_seq {
            return false;
        }
        if self.queue.iter().any(|e| e.seq == id.0) {
            self.cancelled.insert(id.0)
        } else {
            false
        }
    }

    /// Pops the next live event with `fire_time <= bound`, advancing the clock to it.
    pub fn pop_until(&mut self, bound: SimTime) -> Option<(SimTime, E)> {
        loop {
            let head = self.queue.peek()?;
            if head.at > bound {
                return None;
            }
            let entry = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&entry.seq) {
                continue;
            }
            self.now = entry.at;
            self.executed += 1;
            return Some((entry.at, entry.event));
        }
    }

    /// Moves the clock forward without executing anything; never moves it back.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Executes every event with `fire_time <= t_end` (including ones scheduled by
    /// handlers along the way), then sets the clock to `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> usize
    where
        F: FnMut(&mut Scheduler<E>, SimTime, E),
    {
        let mut count = 0;
        while let Some((at, ev)) = self.pop_until(t_end) {
            handler(self, at, ev);
            count += 1;
        }
        self.advance_to(t_end);
        count
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue
            .iter()
            .filter(|e| !self.cancelled.contains(&e.seq))
            .map(|e| e.at)
            .min()
    }
}

/// Splitmix64 generator. The output stream depends only on the seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeededRng {
    seed: u64,
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng { seed, state: seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi].
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // Lemire's multiply-shift; bias is irrelevant at the ranges used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Independent stream derived from this generator's seed and a stream label.
    pub fn fork(&self, stream: u64) -> SeededRng {
        let mut mixer = SeededRng::new(self.seed ^ stream.wrapping_mul(GOLDEN_GAMMA).rotate_left(17));
        SeededRng::new(mixer.next_u64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_at_now_fires_on_next_step() {
        let mut s: Scheduler<&str> = Scheduler::new();
        let id = s.schedule(SimTime::ZERO, "e").unwrap();
        assert_eq!(id, EventId(0));
        assert_eq!(s.pop_until(SimTime::ZERO), Some((SimTime::ZERO, "e")));
    }

    #[test]
    fn equal_times_run_in_insertion_order() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_micros(5), 1).unwrap();
        s.schedule(SimTime::from_micros(5), 2).unwrap();
        let mut seen = vec![];
        s.run_until(SimTime::from_micros(5), |_, _, e| seen.push(e));
        assert_eq!(seen, vec![1, 2]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut s: Scheduler<()> = Scheduler::new();
        s.run_until(SimTime::from_micros(7), |_, _, _| {});
        assert_eq!(
            s.schedule(SimTime::from_micros(3), ()),
            Err(SimError::SchedulingInPast {
                at: SimTime::from_micros(3),
                now: SimTime::from_micros(7)
            })
        );
    }

    #[test]
    fn run_until_on_empty_queue_moves_clock() {
        let mut s: Scheduler<()> = Scheduler::new();
        assert_eq!(s.run_until(SimTime::from_micros(10), |_, _, _| {}), 0);
        assert_eq!(s.now(), SimTime::from_micros(10));
    }

    #[test]
    fn run_until_stops_at_bound() {
        let mut s = Scheduler::new();
        for t in 1..=3 {
            s.schedule(SimTime::from_micros(t), t).unwrap();
        }
        assert_eq!(s.run_until(SimTime::from_micros(2), |_, _, _| {}), 2);
        assert_eq!(s.now(), SimTime::from_micros(2));
        assert_eq!(s.pending(), 1);
    }

    #[test]
    fn child_scheduled_at_same_time_also_runs() {
        let mut s = Scheduler::new();
        s.schedule(SimTime::from_micros(2), "parent").unwrap();
        let mut seen = vec![];
        let n = s.run_until(SimTime::from_micros(2), |sched, at, e| {
            seen.push(e);
            if e == "parent" {
                sched.schedule(at, "child").unwrap();
            }
        });
        assert_eq!(n, 2);
        assert_eq!(seen, vec!["parent", "child"]);
    }

    #[test]
    fn cancelled_events_do_not_run() {
        let mut s = Scheduler::new();
        let a = s.schedule(SimTime::from_micros(1), 'a').unwrap();
        s.schedule(SimTime::from_micros(2), 'b').unwrap();
        assert!(s.cancel(a));
        assert!(!s.cancel(a));
        let mut seen = vec![];
        s.run_until(SimTime::from_micros(5), |_, _, e| seen.push(e));
        assert_eq!(seen, vec!['b']);
    }

    #[test]
    fn splitmix_reference_vector() {
        // First outputs of the reference splitmix64 with seed 0.
        let mut r = SeededRng::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn forks_are_deterministic_and_distinct() {
        let base = SeededRng::new(42);
        let mut a = base.fork(1);
        let mut b = base.fork(1);
        let mut c = base.fork(2);
        let va: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let vb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let vc: Vec<u64> = (0..4).map(|_| c.next_u64()).collect();
        assert_eq!(va, vb);
        assert_ne!(va, vc);
    }

    #[test]
    fn secs_round_trip() {
        assert_eq!(SimTime::from_secs_f64(0.0005).as_micros(), 500);
        assert_eq!(SimTime::from_secs_f64(-1.0), SimTime::ZERO);
        assert_eq!(SimTime::from_secs(2).as_secs_f64(), 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clock_is_monotone_and_order_is_stable(times in proptest::collection::vec(0u64..50, 1..40)) {
                let mut s = Scheduler::new();
                for (i, t) in times.iter().enumerate() {
                    s.schedule(SimTime::from_micros(*t), i).unwrap();
                }
                let mut order = vec![];
                s.run_until(SimTime::from_micros(100), |_, at, i| order.push((at, i)));
                for w in order.windows(2) {
                    prop_assert!(w[1].0 > w[0].0 || (w[1].0 == w[0].0 && w[1].1 > w[0].1));
                }
                prop_assert_eq!(order.len(), times.len());
                prop_assert_eq!(s.now(), SimTime::from_micros(100));
            }

            #[test]
            fn uniform_stays_in_range(seed in any::<u64>(), lo in -5.0f64..5.0, span in 0.0f64..10.0) {
                let mut r = SeededRng::new(seed);
                for _ in 0..32 {
                    let v = r.uniform(lo, lo + span);
                    prop_assert!(v >= lo && v <= lo + span);
                }
            }
        }
    }
}
