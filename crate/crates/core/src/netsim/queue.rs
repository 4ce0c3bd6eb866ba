//! Deterministic min-queue keyed on `(due_ms, tiebreak_seq)`.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueueError {
    #[error("pop on an empty event queue")]
    Empty,
}

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub due_ms: u64,
    /// Unique, assigned in scheduling order.
    pub seq: u64,
    pub payload: P,
}

impl<P> PartialEq for Event<P> {
    fn eq(&self, other: &Self) -> bool {
        self.due_ms == other.due_ms && self.seq == other.seq
    }
}

impl<P> Eq for Event<P> {}

impl<P> Ord for Event<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.due_ms.cmp(&other.due_ms).then(self.seq.cmp(&other.seq))
    }
}

impl<P> PartialOrd for Event<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug)]
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<Event<P>>>,
    next_seq: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            next_seq: 0,
        }
    }

    /// Schedules `payload` at `due_ms` and returns its tiebreak sequence.
    pub fn schedule(&mut self, due_ms: u64, payload: P) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { due_ms, seq, payload }));
        seq
    }

    pub fn pop(&mut self) -> Result<Event<P>, QueueError> {
        self.heap.pop().map(|Reverse(e)| e).ok_or(QueueError::Empty)
    }

    pub fn peek_due(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse(e)| e.due_ms)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn same_time_pops_in_schedule_order() {
        let mut q = EventQueue::new();
        q.schedule(10, "A");
        q.schedule(10, "B");
        assert_eq!(q.pop().unwrap().payload, "A");
        assert_eq!(q.pop().unwrap().payload, "B");
    }

    #[test]
    fn earlier_time_first() {
        let mut q = EventQueue::new();
        q.schedule(20, "B");
        q.schedule(10, "A");
        assert_eq!(q.pop().unwrap().payload, "A");
        assert_eq!(q.pop().unwrap().payload, "B");
    }

    #[test]
    fn empty_pop_is_an_error() {
        let mut q: EventQueue<()> = EventQueue::new();
        assert_eq!(q.pop().unwrap_err(), QueueError::Empty);
    }

    fn drain_trace(seed: u64) -> Vec<(u64, u64, u32)> {
        let mut rng = RngStream::derive(seed, 0, "test/queue");
        let mut q = EventQueue::new();
        let mut out = Vec::new();
        for i in 0..10_000u32 {
            q.schedule(rng.next_u64() % 500, i);
            if i % 7 == 0 {
                let e = q.pop().unwrap();
                out.push((e.due_ms, e.seq, e.payload));
            }
        }
        while let Ok(e) = q.pop() {
            out.push((e.due_ms, e.seq, e.payload));
        }
        out
    }

    #[test]
    fn random_schedules_drain_identically() {
        let a = drain_trace(3);
        let b = drain_trace(3);
        assert_eq!(a.len(), 10_000);
        assert_eq!(a, b);
        // full drain after the last push is sorted on (due, seq)
        let tail = &a[a.len() - 100..];
        assert!(tail.windows(2).all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
    }
}
