use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    JobComplete,
    BlockBoundary,
    RateWindowClose,
    ControlTick,
    BatchTimerFire,
    JobStart,
    TraceEnd,
}

impl EventKind {
    /// Order among events sharing a timestamp. Completions land first so a
    /// control tick sees them; window closes precede ticks so the controller
    /// reads the freshest window; ticks precede the timer fire they must not
    /// affect mid-period.
    fn rank(self) -> u64 {
        match self {
            Self::JobComplete => 0,
            Self::BlockBoundary => 1,
            Self::RateWindowClose => 2,
            Self::ControlTick => 3,
            Self::BatchTimerFire => 4,
            Self::JobStart => 5,
            Self::TraceEnd => 6,
        }
    }
}

const RANK_SHIFT: u32 = 56;

/// A scheduled event. Events run in `(fire_at, sequence)` order; the kind's
/// rank occupies the top bits of `sequence` so ties resolve by kind, then by
/// insertion order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EngineEvent {
    pub fire_at: Millis,
    pub sequence: u64,
    pub kind: EventKind,
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<(Millis, u64, EventKind)>>,
    counter: u64,
    last_popped: Option<Millis>,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, fire_at: Millis, kind: EventKind) -> EngineEvent {
        let sequence = (kind.rank() << RANK_SHIFT) | self.counter;
        self.counter += 1;
        self.heap.push(Reverse((fire_at, sequence, kind)));
        EngineEvent { fire_at, sequence, kind }
    }

    pub fn pop(&mut self) -> Option<EngineEvent> {
        let Reverse((fire_at, sequence, kind)) = self.heap.pop()?;
        debug_assert!(self.last_popped.is_none_or(|t| t <= fire_at), "event time went backwards");
        self.last_popped = Some(fire_at);
        Some(EngineEvent { fire_at, sequence, kind })
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
