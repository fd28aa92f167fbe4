//! Behavioral correctness scoring.
//!
//! A task with `|A|` coordinated actions and correctness `C ∈ {0, 0.5, 1}`
//! scores `2C`, `5C` or `10C` depending on its complexity class (at most 2
//! actions, 3 to 5, more than 5). Normalizing by the class maximum maps
//! every score back to `{0, 0.5, 1}`.

mod pattern;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use pattern::{check_pattern, ExpectedInterval, Pattern, PatternReport, PatternSpec};

#[derive(Debug, thiserror::Error)]
pub enum BcmError {
    #[error("correctness must be 0, 0.5 or 1, got {0}")]
    InvalidCorrectness(f64),
    #[error("action count must be at least 1")]
    InvalidActionCount,
    #[error("trace uses channels missing from the spec: {}", .0.join(", "))]
    SpecMismatch(Vec<String>),
    #[error("invalid pattern spec: {0}")]
    InvalidSpec(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Complexity {
    Basic,
    Medium,
    Complex,
}

impl Complexity {
    pub fn of(action_count: u32) -> Self {
        match action_count {
            0..=2 => Complexity::Basic,
            3..=5 => Complexity::Medium,
            _ => Complexity::Complex,
        }
    }

    /// Weight of the class, which is also its maximum score.
    pub fn weight(self) -> f64 {
        match self {
            Complexity::Basic => 2.0,
            Complexity::Medium => 5.0,
            Complexity::Complex => 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    #[serde(default)]
    pub task: String,
    #[serde(alias = "|A|")]
    pub action_count: u32,
    #[serde(alias = "C")]
    pub correctness: f64,
}

impl TaskResult {
    pub fn new(task: impl Into<String>, action_count: u32, correctness: f64) -> Self {
        Self {
            task: task.into(),
            action_count,
            correctness,
        }
    }

    pub fn validate(&self) -> Result<(), BcmError> {
        if self.action_count == 0 {
            return Err(BcmError::InvalidActionCount);
        }
        if ![0.0, 0.5, 1.0].contains(&self.correctness) {
            return Err(BcmError::InvalidCorrectness(self.correctness));
        }
        Ok(())
    }

    pub fn complexity(&self) -> Complexity {
        Complexity::of(self.action_count)
    }
}

pub fn raw_score(result: &TaskResult) -> Result<f64, BcmError> {
    result.validate()?;
    Ok(result.complexity().weight() * result.correctness)
}

pub fn normalized_score(result: &TaskResult) -> Result<f64, BcmError> {
    Ok(raw_score(result)? / result.complexity().weight())
}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredTask {
    pub task: String,
    pub action_count: u32,
    pub correctness: f64,
    pub complexity: Complexity,
    pub raw: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub tasks: Vec<ScoredTask>,
    pub mean_normalized: Option<f64>,
}

pub fn score_results(results: &[TaskResult]) -> Result<ScoreReport, BcmError> {
    let tasks = results
        .iter()
        .map(|r| {
            Ok(ScoredTask {
                task: r.task.clone(),
                action_count: r.action_count,
                correctness: r.correctness,
                complexity: r.complexity(),
                raw: raw_score(r)?,
                normalized: normalized_score(r)?,
            })
        })
        .collect::<Result<Vec<_>, BcmError>>()?;
    let normalized: Vec<f64> = tasks.iter().map(|t| t.normalized).collect();
    Ok(ScoreReport {
        mean_normalized: mean(&normalized),
        tasks,
    })
}

/// Reads a JSON array of results, or a single result object.
pub fn parse_results(text: &str) -> Result<Vec<TaskResult>, BcmError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<TaskResult>),
        One(TaskResult),
    }
    Ok(match serde_json::from_str(text)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(r) => vec![r],
    })
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<TaskResult>, BcmError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| BcmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_results(&text)
}
