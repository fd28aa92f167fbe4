//! Checks an execution trace against one of four behavioral patterns.
//!
//! A spec lists the expected intervals; the check turns them into a set of
//! relations (presence, timing, ordering, overlap, termination) and grades
//! the trace `1.0` when every relation holds, `0.5` when more than half do,
//! and `0.0` otherwise.
//!
//! ```json
//! {"pattern": "sequential", "channels": ["main", "C1"], "tolerance_ms": 0,
//!  "intervals": [{"function": "F1", "channel": "C1", "start": 0, "end": 2000}]}
//! ```

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BcmError;
use crate::executor::{EventKind, ExecutionTrace, Interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    /// Ordered, disjoint intervals.
    Sequential,
    /// Every pair of listed intervals overlaps.
    Parallel,
    /// The parent ends when its last child does.
    ConditionTermination,
    /// Everything running at the interrupt ends at the interrupt.
    EventTermination,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedInterval {
    pub function: String,
    pub channel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<u64>,
}

impl ExpectedInterval {
    pub fn new(function: &str, channel: &str, start: u64, end: u64) -> Self {
        Self {
            function: function.into(),
            channel: channel.into(),
            start: Some(start),
            end: Some(end),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub pattern: Pattern,
    pub channels: Vec<String>,
    #[serde(default)]
    pub intervals: Vec<ExpectedInterval>,
    /// Spanning parent, for condition termination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Children of `parent`; defaults to every other listed interval.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<String>,
    /// Interrupt time, for event termination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interrupt_ms: Option<u64>,
    #[serde(default)]
    pub tolerance_ms: u64,
}

impl PatternSpec {
    pub fn from_json(text: &str) -> Result<Self, BcmError> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BcmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BcmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), BcmError> {
        for iv in &self.intervals {
            if let (Some(s), Some(e)) = (iv.start, iv.end) {
                if e < s {
                    return Err(BcmError::InvalidSpec(format!(
                        "`{}` ends at {e} before it starts at {s}",
                        iv.function
                    )));
                }
            }
            if !self.channels.contains(&iv.channel) {
                return Err(BcmError::InvalidSpec(format!(
                    "`{}` is on undeclared channel `{}`",
                    iv.function, iv.channel
                )));
            }
        }
        match self.pattern {
            Pattern::ConditionTermination if self.parent.is_none() => {
                Err(BcmError::InvalidSpec("condition termination needs a parent".into()))
            }
            Pattern::EventTermination if self.interrupt_ms.is_none() => {
                Err(BcmError::InvalidSpec("event termination needs interrupt_ms".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternReport {
    pub pattern: Pattern,
    pub correctness: f64,
    pub relations: usize,
    pub held: usize,
    pub violations: Vec<String>,
}

struct Checker {
    total: usize,
    held: usize,
    violations: Vec<String>,
}

impl Checker {
    fn check(&mut self, ok: bool, violation: impl FnOnce() -> String) {
        self.total += 1;
        if ok {
            self.held += 1;
        } else {
            self.violations.push(violation());
        }
    }
}

fn near(actual: u64, expected: u64, tol: u64) -> bool {
    actual.abs_diff(expected) <= tol
}

fn show(iv: &Interval) -> String {
    format!("{}@{} [{}, {}]", iv.function, iv.channel, iv.start, iv.end)
}

pub fn check_pattern(trace: &ExecutionTrace, spec: &PatternSpec) -> Result<PatternReport, BcmError> {
    spec.validate()?;
    let intervals = trace.intervals();
    let unknown: BTreeSet<String> = intervals
        .iter()
        .map(|iv| iv.channel.to_string())
        .filter(|c| !spec.channels.contains(c))
        .collect();
    if !unknown.is_empty() {
        return Err(BcmError::SpecMismatch(unknown.into_iter().collect()));
    }

    let tol = spec.tolerance_ms;
    let mut c = Checker {
        total: 0,
        held: 0,
        violations: Vec::new(),
    };

    // k-th expected (function, channel) pairs with the k-th actual one
    let mut seen: HashMap<(&str, &str), usize> = HashMap::new();
    let mut matched: Vec<Option<&Interval>> = Vec::new();
    for exp in &spec.intervals {
        let k = seen.entry((&exp.function, &exp.channel)).or_default();
        let actual = intervals
            .iter()
            .filter(|iv| iv.function == exp.function && iv.channel.as_str() == exp.channel)
            .nth(*k);
        *k += 1;
        c.check(actual.is_some(), || {
            format!("no interval for {} on {}", exp.function, exp.channel)
        });
        if let Some(iv) = actual {
            if let Some(s) = exp.start {
                c.check(near(iv.start, s, tol), || {
                    format!("{} starts at {}, expected {s}", show(iv), iv.start)
                });
            }
            if let Some(e) = exp.end {
                c.check(near(iv.end, e, tol), || {
                    format!("{} ends at {}, expected {e}", show(iv), iv.end)
                });
            }
        }
        matched.push(actual);
    }

    match spec.pattern {
        Pattern::Sequential => {
            for ch in &spec.channels {
                let on: Vec<&Interval> = intervals.iter().filter(|iv| iv.channel.as_str() == ch).collect();
                for w in on.windows(2) {
                    c.check(w[0].end <= w[1].start + tol, || {
                        format!("{} overlaps {}", show(w[0]), show(w[1]))
                    });
                }
            }
            let listed: Vec<&Interval> = matched.iter().flatten().copied().collect();
            for w in listed.windows(2) {
                c.check(w[0].end <= w[1].start + tol, || {
                    format!("{} does not finish before {}", show(w[0]), show(w[1]))
                });
            }
        }
        Pattern::Parallel => {
            let listed: Vec<&Interval> = matched.iter().flatten().copied().collect();
            for (i, a) in listed.iter().enumerate() {
                for b in &listed[i + 1..] {
                    c.check(a.start.max(b.start) < a.end.min(b.end), || {
                        format!("{} does not overlap {}", show(a), show(b))
                    });
                }
            }
        }
        Pattern::ConditionTermination => {
            let parent_name = spec.parent.as_deref().expect("validated");
            let parent = intervals.iter().find(|iv| iv.function == parent_name);
            let children: Vec<&Interval> = if spec.children.is_empty() {
                matched
                    .iter()
                    .flatten()
                    .copied()
                    .filter(|iv| iv.function != parent_name)
                    .collect()
            } else {
                intervals
                    .iter()
                    .filter(|iv| spec.children.contains(&iv.function))
                    .collect()
            };
            c.check(parent.is_some(), || format!("parent {parent_name} never ran"));
            c.check(!children.is_empty(), || "no child intervals".to_string());
            if let (Some(p), Some(last)) = (parent, children.iter().map(|iv| iv.end).max()) {
                c.check(near(p.end, last, tol), || {
                    format!("{} ends at {}, last child ends at {last}", show(p), p.end)
                });
                for ch in &children {
                    c.check(ch.start + tol >= p.start && ch.end <= p.end + tol, || {
                        format!("{} is not inside {}", show(ch), show(p))
                    });
                }
            }
        }
        Pattern::EventTermination => {
            let t = spec.interrupt_ms.expect("validated");
            let active: Vec<&Interval> = intervals
                .iter()
                .filter(|iv| iv.start <= t && iv.end + tol >= t)
                .collect();
            c.check(!active.is_empty(), || format!("nothing was running at {t}"));
            for iv in active {
                c.check(near(iv.end, t, tol) && iv.end_kind == EventKind::Interrupted, || {
                    format!("{} was not interrupted at {t}", show(iv))
                });
            }
            for iv in intervals.iter().filter(|iv| iv.start > t + tol) {
                c.check(false, || format!("{} started after the interrupt", show(iv)));
            }
        }
    }

    let correctness = if c.held == c.total {
        1.0
    } else if 2 * c.held > c.total {
        0.5
    } else {
        0.0
    };
    Ok(PatternReport {
        pattern: spec.pattern,
        correctness,
        relations: c.total,
        held: c.held,
        violations: c.violations,
    })
}
