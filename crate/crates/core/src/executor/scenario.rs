use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scheduler::ChannelDecl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    #[default]
    Virtual,
    Realtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorPolicy {
    /// The first failure aborts the program.
    #[default]
    Strict,
    /// Failures are reported and the rest of the program keeps running.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InterruptSpec {
    #[serde(default)]
    pub reason: String,
}

impl InterruptSpec {
    pub fn new(reason: impl Into<String>) -> Self {
        Self {
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledInterrupt {
    pub time_ms: u64,
    #[serde(flatten)]
    pub spec: InterruptSpec,
}

/// Simulation parameters for one run.
///
/// ```json
/// {"channels": [{"id": "main", "kind": "main"}, {"id": "C1", "kind": "sub"}],
///  "durations": {"F1": 2000}, "text_rate": 50.0,
///  "interrupts": [{"time_ms": 5500, "reason": "stop"}]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Empty means "use the registry's channels".
    #[serde(default)]
    pub channels: Vec<ChannelDecl>,
    /// Per-function durations; functions not listed use their descriptor's
    /// simulated duration.
    #[serde(default)]
    pub durations: BTreeMap<String, u64>,
    /// Milliseconds per character of spoken text.
    #[serde(default = "default_text_rate")]
    pub text_rate: f64,
    #[serde(default)]
    pub clock_mode: ClockMode,
    #[serde(default)]
    pub interrupts: Vec<ScheduledInterrupt>,
    #[serde(default)]
    pub error_policy: ErrorPolicy,
    #[serde(default = "default_true")]
    pub skip_whitespace_text: bool,
}

fn default_text_rate() -> f64 {
    50.0
}

fn default_true() -> bool {
    true
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            channels: Vec::new(),
            durations: BTreeMap::new(),
            text_rate: default_text_rate(),
            clock_mode: ClockMode::Virtual,
            interrupts: Vec::new(),
            error_policy: ErrorPolicy::Strict,
            skip_whitespace_text: true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("text_rate must be positive, got {0}")]
    TextRate(f64),
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.text_rate.is_finite() && self.text_rate > 0.0) {
            return Err(ScenarioError::TextRate(self.text_rate));
        }
        Ok(())
    }

    pub fn with_duration(mut self, function: impl Into<String>, ms: u64) -> Self {
        self.durations.insert(function.into(), ms);
        self
    }

    pub fn with_interrupt(mut self, time_ms: u64, reason: impl Into<String>) -> Self {
        self.interrupts.push(ScheduledInterrupt {
            time_ms,
            spec: InterruptSpec::new(reason),
        });
        self
    }

    /// Spoken duration of `text`.
    pub fn text_duration(&self, text: &str) -> u64 {
        (text.chars().count() as f64 * self.text_rate).round() as u64
    }
}
