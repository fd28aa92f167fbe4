//! Chunk sources feeding the runtime.
//!
//! A source is an ordered, single-consumer iterator of [`TimedChunk`]s. The
//! `t_ms` of each chunk is its delivery offset from the start of the run; in
//! virtual-clock mode it drives the simulator clock, in real-time mode the
//! runtime waits until that offset before handing the chunk to the parser.

mod live;
mod trace_file;

use serde::{Deserialize, Serialize};

pub use live::{open_live, DeltaDecoder, Decoded, LiveConfig, SseDecoder};
pub use trace_file::{open_trace, read_trace, write_trace, TraceRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedChunk {
    pub t_ms: u64,
    pub text: String,
}

impl TimedChunk {
    pub fn new(t_ms: u64, text: impl Into<String>) -> Self {
        Self {
            t_ms,
            text: text.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("malformed trace file at line {line}: {message}")]
    MalformedTraceFile { line: usize, message: String },
    #[error("invalid speed factor {0}")]
    InvalidSpeed(f64),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("connection failed: {0}")]
    ConnectFailed(String),
    #[error("stream aborted: {0}")]
    StreamAborted(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
}

pub type SourceItem = Result<TimedChunk, SourceError>;

/// Boxed chunk stream accepted by the runtime.
pub type ChunkSource = Box<dyn Iterator<Item = SourceItem> + Send>;

/// Every chunk at t = 0.
pub fn immediate<I, S>(chunks: I) -> ChunkSource
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let v: Vec<SourceItem> = chunks
        .into_iter()
        .map(|c| Ok(TimedChunk::new(0, c)))
        .collect();
    Box::new(v.into_iter())
}

/// Chunk `k` at `t = k * tick_ms`.
pub fn throttled<I, S>(chunks: I, tick_ms: u64) -> ChunkSource
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let v: Vec<SourceItem> = chunks
        .into_iter()
        .enumerate()
        .map(|(k, c)| Ok(TimedChunk::new(k as u64 * tick_ms, c)))
        .collect();
    Box::new(v.into_iter())
}

/// Pre-timed chunks.
pub fn timed(chunks: Vec<TimedChunk>) -> ChunkSource {
    Box::new(chunks.into_iter().map(Ok))
}

/// Splits `text` into pieces of at most `size` characters, never inside a
/// code point.
pub fn split_chars(text: &str, size: usize) -> Vec<String> {
    let size = size.max(1);
    let chars: Vec<char> = text.chars().collect();
    chars.chunks(size).map(|c| c.iter().collect()).collect()
}
