//! Deterministic discrete-event engine.
//!
//! Events are ordered by `(time, seq)`: equal timestamps dispatch in
//! insertion order. Time is integer microseconds.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Simulation time in microseconds.
pub type Micros = u64;

/// Node identifier, an index into the topology's node list.
pub type NodeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("event scheduled at t={event} before current clock t={clock}")]
    Causality { event: Micros, clock: Micros },
}

/// Coarse classification of an event, used for traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    TxStart,
    TxEnd,
    TimerExpiry,
    BackoffSlotBoundary,
    PacketArrival,
}

/// A dispatched event: timestamp, tie-break sequence number, target node and payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub time: Micros,
    pub seq: u64,
    pub kind: EventKind,
    pub target: NodeId,
    pub payload: P,
}

/// Handle to a scheduled event; used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Pending<P> {
    kind: EventKind,
    target: NodeId,
    payload: P,
}

/// Priority event queue with a monotone clock.
pub struct Scheduler<P> {
    clock: Micros,
    next_seq: u64,
    heap: BinaryHeap<Reverse<(Micros, u64)>>,
    pending: HashMap<u64, Pending<P>>,
}

impl<P> Default for Scheduler<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Scheduler<P> {
    pub fn new() -> Self {
        Scheduler {
            clock: 0,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashMap::new(),
        }
    }

    pub fn now(&self) -> Micros {
        self.clock
    }

    /// Number of live (scheduled, not cancelled, not dispatched) events.
    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn schedule(
        &mut self,
        time: Micros,
        kind: EventKind,
        target: NodeId,
        payload: P,
    ) -> Result<EventHandle, EngineError> {
        if time < self.clock {
            return Err(EngineError::Causality {
                event: time,
                clock: self.clock,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse((time, seq)));
        self.pending.insert(
            seq,
            Pending {
                kind,
                target,
                payload,
            },
        );
        Ok(EventHandle(seq))
    }

    /// Schedules `delay` microseconds after the current clock; never violates causality.
    pub fn schedule_in(
        &mut self,
        delay: Micros,
        kind: EventKind,
        target: NodeId,
        payload: P,
    ) -> EventHandle {
        let at = self.clock + delay;
        self.schedule(at, kind, target, payload)
            .expect("relative schedule is always causal")
    }

    /// Returns true iff the event existed and had not fired.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.0).is_some()
    }

    pub fn is_pending(&self, handle: EventHandle) -> bool {
        self.pending.contains_key(&handle.0)
    }

    /// Pops the next live event with `time <= t_end`, advancing the clock to it.
    pub fn pop_until(&mut self, t_end: Micros) -> Option<Event<P>> {
        while let Some(&Reverse((time, seq))) = self.heap.peek() {
            if time > t_end {
                return None;
            }
            self.heap.pop();
            if let Some(p) = self.pending.remove(&seq) {
                self.clock = time;
                return Some(Event {
                    time,
                    seq,
                    kind: p.kind,
                    target: p.target,
                    payload: p.payload,
                });
            }
        }
        None
    }

    /// Dispatches every event with `time <= t_end`, then sets the clock to `t_end`.
    ///
    /// The handler may schedule further events; those due before `t_end` are
    /// dispatched in the same call.
    pub fn run_until<F>(&mut self, t_end: Micros, mut handler: F) -> Result<usize, EngineError>
    where
        F: FnMut(&mut Scheduler<P>, Event<P>),
    {
        if t_end < self.clock {
            return Err(EngineError::Causality {
                event: t_end,
                clock: self.clock,
            });
        }
        let mut count = 0;
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
            count += 1;
        }
        self.clock = t_end;
        Ok(count)
    }

    /// Moves the clock forward without dispatching; used after `pop_until` loops.
    pub fn advance_to(&mut self, t: Micros) {
        if t > self.clock {
            self.clock = t;
        }
    }
}

/// Seeded per-node random stream. Identical `(seed, stream)` pairs yield
/// identical sequences on every platform (ChaCha8).
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One JSON-lines record of a dispatched event.
#[derive(Debug, Clone, Serialize)]
pub struct EventRecord {
    pub t: Micros,
    pub seq: u64,
    pub kind: EventKind,
    pub node: NodeId,
    pub detail: String,
}

/// Writes event records as JSON lines.
pub struct EventTraceWriter<W: Write> {
    out: W,
}

impl<W: Write> EventTraceWriter<W> {
    pub fn new(out: W) -> Self {
        EventTraceWriter { out }
    }

    pub fn write(&mut self, rec: &EventRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
