use super::FaultError;

/// An event stream that can be re-read by offset.
pub trait ReplayableSource {
    type Event;

    fn len(&self) -> u64;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Events at offsets `[start, end)`; the same range always yields the
    /// same events.
    fn read(&self, start: u64, end: u64) -> Result<&[Self::Event], FaultError>;
}

/// In-memory event log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog<T> {
    events: Vec<T>,
}

impl<T> EventLog<T> {
    pub fn new(events: Vec<T>) -> Self {
        EventLog { events }
    }

    pub fn events(&self) -> &[T] {
        &self.events
    }

    /// Offset range `[start, end)` of an ordered log where every event
    /// before `start` satisfies `before` and the events in the range satisfy
    /// `within`.
    pub fn range_where(&self, mut before: impl FnMut(&T) -> bool, mut within: impl FnMut(&T) -> bool) -> (u64, u64) {
        let start = self.events.partition_point(|e| before(e));
        let len = self.events[start..].partition_point(|e| within(e));
        (start as u64, (start + len) as u64)
    }
}

impl<T> ReplayableSource for EventLog<T> {
    type Event = T;

    fn len(&self) -> u64 {
        self.events.len() as u64
    }

    fn read(&self, start: u64, end: u64) -> Result<&[T], FaultError> {
        if start > end || end > self.len() {
            return Err(FaultError::SourceRange {
                start,
                end,
                len: self.len(),
            });
        }
        Ok(&self.events[start as usize..end as usize])
    }
}
