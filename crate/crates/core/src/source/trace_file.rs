//! Recorded streams: one JSON object per line, `{"t_ms": 100, "chunk": "<wait>"}`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChunkSource, SourceError, TimedChunk};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub t_ms: u64,
    pub chunk: String,
}

/// Parses trace text. Blank lines are skipped; offsets must not decrease.
pub fn read_trace(text: &str) -> Result<Vec<TraceRecord>, SourceError> {
    let mut records: Vec<TraceRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord =
            serde_json::from_str(line).map_err(|e| SourceError::MalformedTraceFile {
                line: i + 1,
                message: e.to_string(),
            })?;
        if let Some(prev) = records.last() {
            if rec.t_ms < prev.t_ms {
                return Err(SourceError::MalformedTraceFile {
                    line: i + 1,
                    message: format!("t_ms {} is earlier than {}", rec.t_ms, prev.t_ms),
                });
            }
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn write_trace(records: &[TraceRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Opens a trace file. Offsets are multiplied by `speed_factor`: 1 replays as
/// recorded, 0.5 twice as fast, 0 delivers everything at once.
pub fn open_trace(path: impl AsRef<Path>, speed_factor: f64) -> Result<ChunkSource, SourceError> {
    if !speed_factor.is_finite() || speed_factor < 0.0 {
        return Err(SourceError::InvalidSpeed(speed_factor));
    }
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SourceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let records = read_trace(&text)?;
    let chunks: Vec<_> = records
        .into_iter()
        .map(|r| {
            let t = (r.t_ms as f64 * speed_factor).round() as u64;
            Ok(TimedChunk::new(t, r.chunk))
        })
        .collect();
    Ok(Box::new(chunks.into_iter()))
}
