//! Timestamped simulation events and the priority queue that orders them.
//!
//! Events are totally ordered by `(time, seq)`: `seq` is a monotonically
//! increasing tie-breaker assigned at push time, so simultaneous events
//! dequeue in insertion order and the trace is reproducible bit for bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// What an event does when dispatched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    /// A request enters the system.
    Arrival { request_id: u64 },
    /// A pod finishes serving its current request.
    ServiceComplete { pod_id: u32 },
    /// A pending pod finishes cold start and joins the rotation.
    PodReady { pod_id: u32 },
    /// Periodic autoscaler evaluation.
    ControlTick,
    /// Scaling actuation ordered by the most recent control tick.
    ScaleCommand { desired: u32 },
}

/// A scheduled event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time_s: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so the BinaryHeap pops the earliest (time, seq) first.
        other
            .time_s
            .total_cmp(&self.time_s)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue over `(time, seq)` with automatic sequence assignment.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<SimEvent>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time_s: f64, kind: EventKind) {
        debug_assert!(time_s.is_finite() && time_s >= 0.0, "bad event time {time_s}");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(SimEvent { time_s, seq, kind });
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop()
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
    use proptest::prelude::*;

    #[test]
    fn pops_in_time_then_seq_order() {
        let mut q = EventQueue::new();
        q.push(5.0, EventKind::ControlTick);
        q.push(1.0, EventKind::Arrival { request_id: 0 });
        q.push(5.0, EventKind::PodReady { pod_id: 3 });
        q.push(0.5, EventKind::Arrival { request_id: 1 });

        let order: Vec<(f64, u64)> = std::iter::from_fn(|| q.pop())
            .map(|e| (e.time_s, e.seq))
            .collect();
        assert_eq!(order, vec![(0.5, 3), (1.0, 1), (5.0, 0), (5.0, 2)]);
    }

    #[test]
    fn equal_times_dequeue_in_push_order() {
        let mut q = EventQueue::new();
        for i in 0..10u64 {
            q.push(2.0, EventKind::Arrival { request_id: i });
        }
        let ids: Vec<u64> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::Arrival { request_id } => request_id,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn dequeue_is_monotone(times in proptest::collection::vec(0.0_f64..1e6, 1..200)) {
            let mut q = EventQueue::new();
            for &t in &times {
                q.push(t, EventKind::ControlTick);
            }
            let mut prev: Option<(f64, u64)> = None;
            while let Some(e) = q.pop() {
                if let Some((pt, ps)) = prev {
                    prop_assert!(e.time_s > pt || (e.time_s == pt && e.seq > ps));
                }
                prev = Some((e.time_s, e.seq));
            }
        }
    }
}
