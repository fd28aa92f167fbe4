//! Streaming HTTP client for live text deltas.
//!
//! The endpoint is POSTed a request body and answers with a line-delimited
//! stream. How each line maps to a text delta is decided by a
//! [`DeltaDecoder`]; the default [`SseDecoder`] understands server-sent-event
//! `data:` lines carrying either raw text, a JSON string, or a JSON object
//! with a `delta` (or `text`/`content`) string field, and stops at `[DONE]`.

use std::io::{BufRead, BufReader};
use std::time::{Duration, Instant};

use super::{ChunkSource, SourceError, SourceItem, TimedChunk};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Delta(String),
    Skip,
    Done,
}

/// Turns one response line into a delta.
pub trait DeltaDecoder: Send {
    fn decode(&mut self, line: &str) -> Result<Decoded, SourceError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SseDecoder;

impl DeltaDecoder for SseDecoder {
    fn decode(&mut self, line: &str) -> Result<Decoded, SourceError> {
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() || line.starts_with(':') {
            return Ok(Decoded::Skip);
        }
        if ["event:", "id:", "retry:"].iter().any(|p| line.starts_with(p)) {
            return Ok(Decoded::Skip);
        }
        if let Some(payload) = line.strip_prefix("data:") {
            let payload = payload.strip_prefix(' ').unwrap_or(payload);
            if payload == "[DONE]" {
                return Ok(Decoded::Done);
            }
            return match serde_json::from_str::<serde_json::Value>(payload) {
                Ok(v) => json_delta(&v).map(Decoded::Delta),
                Err(_) => Ok(Decoded::Delta(payload.to_string())),
            };
        }
        // newline-delimited JSON without the SSE framing
        match serde_json::from_str::<serde_json::Value>(line) {
            Ok(v) => json_delta(&v).map(Decoded::Delta),
            Err(_) => Err(SourceError::ProtocolError(format!(
                "unrecognized line {line:?}"
            ))),
        }
    }
}

fn json_delta(v: &serde_json::Value) -> Result<String, SourceError> {
    match v {
        serde_json::Value::String(s) => Ok(s.clone()),
        serde_json::Value::Object(map) => ["delta", "text", "content"]
            .iter()
            .find_map(|k| map.get(*k).and_then(|d| d.as_str()))
            .map(str::to_string)
            .ok_or_else(|| SourceError::ProtocolError(format!("no text delta in {v}"))),
        other => Err(SourceError::ProtocolError(format!(
            "unexpected payload {other}"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiveConfig {
    pub url: String,
    pub headers: Vec<(String, String)>,
    /// Request body, sent verbatim.
    pub body: String,
    pub connect_timeout: Duration,
}

impl LiveConfig {
    pub fn new(url: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            headers: vec![("content-type".into(), "application/json".into())],
            body: body.into(),
            connect_timeout: Duration::from_secs(10),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

/// Connects and returns the delta stream with the default decoder.
pub fn open_live(config: &LiveConfig) -> Result<ChunkSource, SourceError> {
    open_live_with(config, SseDecoder)
}

pub fn open_live_with(
    config: &LiveConfig,
    decoder: impl DeltaDecoder + 'static,
) -> Result<ChunkSource, SourceError> {
    let client = reqwest::blocking::Client::builder()
        .connect_timeout(config.connect_timeout)
        .timeout(None)
        .build()
        .map_err(|e| SourceError::ConnectFailed(e.to_string()))?;
    let mut request = client.post(&config.url).body(config.body.clone());
    for (k, v) in &config.headers {
        request = request.header(k.as_str(), v.as_str());
    }
    let started = Instant::now();
    let response = request
        .send()
        .map_err(|e| SourceError::ConnectFailed(e.to_string()))?;
    let status = response.status();
    if !status.is_success() {
        return Err(SourceError::ProtocolError(format!("HTTP status {status}")));
    }
    Ok(Box::new(LiveStream {
        reader: BufReader::new(response),
        decoder: Box::new(decoder),
        started,
        done: false,
    }))
}

struct LiveStream<R> {
    reader: BufReader<R>,
    decoder: Box<dyn DeltaDecoder>,
    started: Instant,
    done: bool,
}

impl<R: std::io::Read + Send> Iterator for LiveStream<R> {
    type Item = SourceItem;

    fn next(&mut self) -> Option<SourceItem> {
        while !self.done {
            let mut line = String::new();
            match self.reader.read_line(&mut line) {
                Ok(0) => self.done = true,
                Ok(_) => match self.decoder.decode(&line) {
                    Ok(Decoded::Delta(text)) => {
                        let t = self.started.elapsed().as_millis() as u64;
                        return Some(Ok(TimedChunk::new(t, text)));
                    }
                    Ok(Decoded::Skip) => {}
                    Ok(Decoded::Done) => self.done = true,
                    Err(e) => {
                        self.done = true;
                        return Some(Err(e));
                    }
                },
                Err(e) => {
                    self.done = true;
                    return Some(Err(SourceError::StreamAborted(e.to_string())));
                }
            }
        }
        None
    }
}
