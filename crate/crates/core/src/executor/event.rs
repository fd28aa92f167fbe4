use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex};

use crossbeam_channel::{Receiver, Sender};
use serde::{Deserialize, Serialize};

use crate::scheduler::ChannelId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Activated,
    Invoked,
    Completed,
    Reset,
    Failed,
    Interrupted,
    TextSpoken,
}

impl EventKind {
    /// Opens an execution interval.
    pub fn is_start(self) -> bool {
        matches!(self, EventKind::Activated | EventKind::Invoked)
    }

    /// Closes an execution interval.
    pub fn is_end(self) -> bool {
        !self.is_start()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionEvent {
    pub seq: u64,
    pub t_ms: u64,
    pub kind: EventKind,
    pub channel: ChannelId,
    pub function: String,
    pub args: serde_json::Map<String, serde_json::Value>,
    pub detail: String,
}

/// One execution span of a function on a channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub channel: ChannelId,
    pub function: String,
    pub start: u64,
    pub end: u64,
    /// How the interval ended.
    pub end_kind: EventKind,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed trace at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub events: Vec<ExecutionEvent>,
}

impl ExecutionTrace {
    pub fn new(events: Vec<ExecutionEvent>) -> Self {
        Self { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Pairs start and end events per channel. An end event closes the most
    /// recent open interval of the same function on its channel; end events
    /// with nothing to close are ignored. Sorted by start time.
    pub fn intervals(&self) -> Vec<Interval> {
        let mut open: Vec<(&ExecutionEvent, usize)> = Vec::new();
        let mut out: Vec<(u64, Interval)> = Vec::new();
        for (i, e) in self.events.iter().enumerate() {
            if e.kind.is_start() {
                open.push((e, i));
                continue;
            }
            if let Some(pos) = open
                .iter()
                .rposition(|(s, _)| s.channel == e.channel && s.function == e.function)
            {
                let (s, idx) = open.remove(pos);
                out.push((
                    idx as u64,
                    Interval {
                        channel: s.channel.clone(),
                        function: s.function.clone(),
                        start: s.t_ms,
                        end: e.t_ms,
                        end_kind: e.kind,
                    },
                ));
            }
        }
        out.sort_by_key(|(idx, iv)| (iv.start, *idx));
        out.into_iter().map(|(_, iv)| iv).collect()
    }

    pub fn intervals_on(&self, channel: &str) -> Vec<Interval> {
        self.intervals()
            .into_iter()
            .filter(|iv| iv.channel.as_str() == channel)
            .collect()
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, TraceError> {
        let mut events = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(e);
        }
        Ok(Self { events })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, TraceError> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }
}

/// Fan-out of events to any number of subscribers. Each subscriber receives
/// every event once, in `seq` order.
#[derive(Debug, Clone, Default)]
pub struct EventBus {
    senders: Arc<Mutex<Vec<Sender<ExecutionEvent>>>>,
}

impl EventBus {
    pub fn subscribe(&self) -> Receiver<ExecutionEvent> {
        let (tx, rx) = crossbeam_channel::unbounded();
        self.senders.lock().expect("bus lock").push(tx);
        rx
    }

    pub fn publish(&self, event: &ExecutionEvent) {
        let mut senders = self.senders.lock().expect("bus lock");
        senders.retain(|s| s.send(event.clone()).is_ok());
    }

    /// Disconnects every subscriber; their receivers drain and then end.
    pub fn close(&self) {
        self.senders.lock().expect("bus lock").clear();
    }
}
