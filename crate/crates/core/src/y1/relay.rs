//! Newline-delimited JSON framing between the consumer and the jammer.
//!
//! Each accepted notification becomes exactly one line carrying the
//! untouched `rai_content` plus the producer timestamp.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::wire::{tick_from_timestamp, NotificationPayload};

pub const RELAY_QUEUE_CAPACITY: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayFrame {
    pub rai_content: Map<String, Value>,
    pub timestamp: String,
}

impl RelayFrame {
    pub fn from_payload(payload: &NotificationPayload) -> Self {
        Self {
            rai_content: payload.rai_content.clone(),
            timestamp: payload.timestamp.clone(),
        }
    }

    /// One line of JSON terminated by '\n'.
    pub fn encode_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("relay frame serializes");
        line.push('\n');
        line
    }

    pub fn parse_line(line: &str) -> serde_json::Result<Self> {
        serde_json::from_str(line.trim_end_matches('\n'))
    }

    /// Source tick recovered from the timestamp.
    pub fn tick(&self) -> Option<u64> {
        tick_from_timestamp(&self.timestamp).and_then(|t| u64::try_from(t).ok())
    }
}

/// Bounded forwarding queue, drop-oldest on overflow.
#[derive(Debug, Default)]
pub struct RelayQueue {
    lines: VecDeque<String>,
    capacity: usize,
    dropped: u64,
}

impl RelayQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            lines: VecDeque::new(),
            capacity: capacity.max(1),
            dropped: 0,
        }
    }

    pub fn push(&mut self, line: String) {
        if self.lines.len() == self.capacity {
            self.lines.pop_front();
            self.dropped += 1;
        }
        self.lines.push_back(line);
    }

    pub fn pop(&mut self) -> Option<String> {
        self.lines.pop_front()
    }

    pub fn drain_all(&mut self) -> Vec<String> {
        self.lines.drain(..).collect()
    }

    /// Reconnect policy: analytics are perishable, so everything but the
    /// newest pending line is discarded.
    pub fn drop_stale_keep_newest(&mut self) -> Option<String> {
        let newest = self.lines.pop_back();
        self.dropped += self.lines.len() as u64;
        self.lines.clear();
        newest
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::y1::wire::timestamp_for_tick;

    fn frame(tick: i64) -> RelayFrame {
        let mut content = Map::new();
        content.insert("dl_bitrate_bps".into(), Value::from(4.0e6));
        RelayFrame {
            rai_content: content,
            timestamp: timestamp_for_tick(tick),
        }
    }

    #[test]
    fn lines_are_single_line_json() {
        let f = frame(5);
        let line = f.encode_line();
        assert!(line.ends_with('\n'));
        assert_eq!(line.matches('\n').count(), 1);
        let back = RelayFrame::parse_line(&line).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.tick(), Some(5));
    }

    #[test]
    fn empty_content_still_encodes() {
        let f = RelayFrame {
            rai_content: Map::new(),
            timestamp: timestamp_for_tick(0),
        };
        let back = RelayFrame::parse_line(&f.encode_line()).unwrap();
        assert!(back.rai_content.is_empty());
    }

    #[test]
    fn queue_drops_oldest() {
        let mut q = RelayQueue::new(3);
        for i in 0..5 {
            q.push(format!("line{i}"));
        }
        assert_eq!(q.len(), 3);
        assert_eq!(q.dropped(), 2);
        assert_eq!(q.pop().as_deref(), Some("line2"));
    }

    #[test]
    fn reconnect_keeps_only_newest() {
        let mut q = RelayQueue::new(8);
        for i in 0..5 {
            q.push(format!("line{i}"));
        }
        assert_eq!(q.drop_stale_keep_newest().as_deref(), Some("line4"));
        assert!(q.is_empty());
        assert_eq!(q.drop_stale_keep_newest(), None);
    }
}
