// SPDX-License-Identifier: Apache-2.0

//! Per-packet event traces and their JSON-lines export.

use std::fmt;
use std::io::{self, Write};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EventKind {
    Classified,
    Encapsulated,
    SegmentAdvanced,
    VnfDelivered,
    VnfReturned,
    Decapsulated,
    ReEncapsulated,
    Forwarded,
    Dropped,
    Delivered,
}

impl EventKind {
    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::Dropped | EventKind::Delivered)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    #[serde(rename = "uid")]
    pub packet_uid: u64,
    pub node: String,
    pub event: EventKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// How much of each packet's path is recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceLevel {
    #[default]
    Full,
    /// Only the Delivered/Dropped event.
    TerminalsOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, level: TraceLevel, event: TraceEvent) {
        if level == TraceLevel::Full || event.event.is_terminal() {
            self.events.push(event);
        }
    }

    pub fn extend(&mut self, other: Trace) {
        self.events.extend(other.events);
    }

    /// `(node, event)` pairs, convenient for comparing against an
    /// expected path.
    pub fn steps(&self) -> Vec<(&str, EventKind)> {
        self.events.iter().map(|e| (e.node.as_str(), e.event)).collect()
    }

    pub fn terminal(&self) -> Option<&TraceEvent> {
        self.events.last().filter(|e| e.event.is_terminal())
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for event in &self.events {
            serde_json::to_writer(&mut out, event)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminals_only_filters() {
        let mut t = Trace::default();
        let ev = |kind| TraceEvent {
            packet_uid: 7,
            node: "ER2".into(),
            event: kind,
            detail: None,
        };
        t.push(TraceLevel::TerminalsOnly, ev(EventKind::Forwarded));
        t.push(TraceLevel::TerminalsOnly, ev(EventKind::Delivered));
        assert_eq!(t.steps(), vec![("ER2", EventKind::Delivered)]);
        assert_eq!(t.to_jsonl(), "{\"uid\":7,\"node\":\"ER2\",\"event\":\"Delivered\"}\n");
    }
}
