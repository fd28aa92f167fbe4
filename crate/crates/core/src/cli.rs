//! Command-line front end. [`run_command`] does the work so it can be driven
//! from tests; the `fnstream` binary only wires up process I/O.
//!
//! Exit codes: 0 success, 1 failure (bad input, failed run), 2 usage error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::bcm::{check_pattern, load_results, score_results, PatternSpec};
use crate::element::ElementBuilder;
use crate::executor::{
    EventKind, ExecutionEvent, ExecutionTrace, InterruptHandle, InterruptSpec, Program, RunOutcome,
    ScenarioConfig,
};
use crate::parser::{ParseEvent, ParserOptions, StreamParser};
use crate::registry::{Registry, RegistryManifest};
use crate::source::{self, open_live, open_trace, ChunkSource, LiveConfig, SourceItem};

/// Environment variable holding the bearer token for `repl --endpoint`.
pub const API_KEY_ENV: &str = "FNSTREAM_API_KEY";

/// Request body used by `repl` unless `--body-template` is given. The
/// placeholders are replaced by JSON values.
pub const DEFAULT_BODY_TEMPLATE: &str =
    r#"{"stream": true, "system": {{system}}, "messages": {{messages}}}"#;

#[derive(Debug, Parser)]
#[command(name = "fnstream", version, about = "Streaming function-token runtime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tokenize a stream and print parse events as JSON lines.
    Parse {
        #[arg(long)]
        input: PathBuf,
        /// Feed the input in pieces of this many characters.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        chunk_size: Option<u64>,
        /// Keep entity references as separate tokens.
        #[arg(long)]
        split_references: bool,
    },
    /// Execute a stream against a registry and scenario.
    Run {
        /// Raw stream text, or a `.jsonl` trace file with timed chunks.
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Where to write the execution trace; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a recorded trace file with timed delivery.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Multiplier for recorded offsets; 0 delivers everything at once.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a results file.
    Score {
        #[arg(long)]
        results: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Grade an execution trace against a pattern spec.
    Check {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        pattern: PathBuf,
        /// Overrides the spec's tolerance.
        #[arg(long)]
        tolerance: Option<u64>,
    },
    /// Print the prompt block describing a registry.
    Prompt {
        #[arg(long)]
        registry: PathBuf,
    },
    /// Chat with a streaming endpoint and execute its replies.
    Repl {
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Request body template with {{system}} and {{messages}} placeholders.
        #[arg(long)]
        body_template: Option<PathBuf>,
        /// Stop after this many turns.
        #[arg(long)]
        max_turns: Option<usize>,
    },
}

/// Summary printed by `run` and `replay`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub events: usize,
    pub counts: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
    pub elapsed_ms: u64,
}

impl RunReport {
    pub fn new(outcome: &RunOutcome, trace_path: Option<&Path>) -> Self {
        let mut counts = BTreeMap::new();
        for e in &outcome.trace.events {
            *counts.entry(format!("{:?}", e.kind)).or_insert(0) += 1;
        }
        Self {
            status: if outcome.is_ok() { "ok" } else { "failed" },
            error: outcome.error.as_ref().map(ToString::to_string),
            events: outcome.trace.len(),
            counts,
            trace_path: trace_path.map(|p| p.display().to_string()),
            elapsed_ms: outcome.elapsed_ms,
        }
    }
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

static ACTIVE: Mutex<Option<InterruptHandle>> = Mutex::new(None);

/// Interrupts the program currently run by a command. Returns false when
/// nothing is running.
pub fn interrupt_active(reason: &str) -> bool {
    match ACTIVE.lock().expect("active lock").as_ref() {
        Some(h) => {
            h.interrupt(InterruptSpec::new(reason));
            true
        }
        None => false,
    }
}

fn run_tracked(program: Program, source: ChunkSource) -> RunOutcome {
    *ACTIVE.lock().expect("active lock") = Some(program.interrupt_handle());
    let outcome = program.run(source);
    *ACTIVE.lock().expect("active lock") = None;
    outcome
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run_command<I, T>(
    args: I,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Parse {
            input: path,
            chunk_size,
            split_references,
        } => cmd_parse(&path, chunk_size, !split_references, out),
        Command::Run {
            stream,
            registry,
            scenario,
            out: trace_out,
        } => load_stream(&stream).and_then(|source| {
            cmd_execute(source, &registry, &scenario, trace_out.as_deref(), out, err)
        }),
        Command::Replay {
            trace,
            speed,
            registry,
            scenario,
            out: trace_out,
        } => open_trace(&trace, speed)
            .map_err(Failure::from)
            .and_then(|source| {
                cmd_execute(source, &registry, &scenario, trace_out.as_deref(), out, err)
            }),
        Command::Score { results, json } => cmd_score(&results, json, out),
        Command::Check {
            trace,
            pattern,
            tolerance,
        } => cmd_check(&trace, &pattern, tolerance, out),
        Command::Prompt { registry } => load_registry(&registry).and_then(|r| {
            out.write_all(r.render_prompt().as_bytes())?;
            Ok(())
        }),
        Command::Repl {
            endpoint,
            registry,
            scenario,
            body_template,
            max_turns,
        } => cmd_repl(
            &endpoint,
            &registry,
            &scenario,
            body_template.as_deref(),
            max_turns,
            input,
            out,
        ),
    };
    match result {
        Ok(()) => 0,
        Err(Failure(message)) => {
            let _ = writeln!(err, "error: {message}");
            1
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_registry(path: &Path) -> Result<Registry, Failure> {
    RegistryManifest::load(path)
        .and_then(RegistryManifest::into_registry)
        .map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig, Failure> {
    ScenarioConfig::load(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_stream(path: &Path) -> Result<ChunkSource, Failure> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        Ok(open_trace(path, 1.0)?)
    } else {
        Ok(source::immediate([read(path)?]))
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{x:.1}")
    } else {
        format!("{}", (x * 1e6).round() / 1e6)
    }
}

fn cmd_parse(path: &Path, chunk_size: Option<u64>, merge: bool, out: &mut dyn Write) -> CmdResult {
    let text = read(path)?;
    let chunks = match chunk_size {
        Some(n) => source::split_chars(&text, n as usize),
        None => vec![text],
    };
    let mut parser = StreamParser::with_options(ParserOptions {
        merge_references: merge,
    });
    let mut builder = ElementBuilder::new();
    let mut events = Vec::new();
    for c in &chunks {
        events.extend(parser.feed_str(c)?);
        if parser.is_failed() {
            break;
        }
    }
    if !parser.is_failed() {
        events.extend(parser.finish()?);
    }
    let mut failure = None;
    for ev in &events {
        serde_json::to_writer(&mut *out, ev)?;
        out.write_all(b"\n")?;
        match ev {
            ParseEvent::Token(t) if failure.is_none() => {
                if let Err(e) = builder.apply_token(t) {
                    failure = Some(e.to_string());
                }
            }
            ParseEvent::Error(e) => failure = failure.or_else(|| Some(e.to_string())),
            _ => {}
        }
    }
    if failure.is_none() {
        if let Err(e) = builder.finish() {
            failure = Some(e.to_string());
        }
    }
    match failure {
        Some(f) => Err(Failure(f)),
        None => Ok(()),
    }
}

fn cmd_execute(
    source: ChunkSource,
    registry: &Path,
    scenario: &Path,
    trace_out: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CmdResult {
    let registry = load_registry(registry)?;
    let scenario = load_scenario(scenario)?;
    let program = Program::new(Arc::new(registry), scenario)?;
    let outcome = run_tracked(program, source);
    let report = RunReport::new(&outcome, trace_out);
    match trace_out {
        Some(path) => {
            let file = std::fs::File::create(path)
                .map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            let mut w = std::io::BufWriter::new(file);
            outcome.trace.write_jsonl(&mut w)?;
            w.flush()?;
            serde_json::to_writer_pretty(&mut *out, &report)?;
            writeln!(out)?;
        }
        None => {
            outcome.trace.write_jsonl(&mut *out)?;
            serde_json::to_writer_pretty(&mut *err, &report)?;
            writeln!(err)?;
        }
    }
    match outcome.error {
        Some(e) => Err(Failure(format!("run failed: {e}"))),
        None => Ok(()),
    }
}

fn cmd_score(path: &Path, json: bool, out: &mut dyn Write) -> CmdResult {
    let results = load_results(path)?;
    let report = score_results(&results)?;
    if json {
        serde_json::to_writer_pretty(&mut *out, &report)?;
        writeln!(out)?;
        return Ok(());
    }
    writeln!(out, "task\t|A|\tC\tclass\traw\tnormalized")?;
    for t in &report.tasks {
        writeln!(
            out,
            "{}\t{}\t{}\t{:?}\t{}\t{}",
            if t.task.is_empty() { "-" } else { &t.task },
            t.action_count,
            fmt_num(t.correctness),
            t.complexity,
            fmt_num(t.raw),
            fmt_num(t.normalized)
        )?;
    }
    match report.mean_normalized {
        Some(m) => writeln!(out, "mean\t{}", fmt_num(m))?,
        None => writeln!(out, "mean\t-")?,
    }
    Ok(())
}

fn cmd_check(trace: &Path, pattern: &Path, tolerance: Option<u64>, out: &mut dyn Write) -> CmdResult {
    let trace = ExecutionTrace::load(trace).map_err(|e| Failure(format!("{}: {e}", trace.display())))?;
    let mut spec = PatternSpec::load(pattern)?;
    if let Some(t) = tolerance {
        spec.tolerance_ms = t;
    }
    let report = check_pattern(&trace, &spec)?;
    writeln!(out, "pattern: {:?}", report.pattern)?;
    writeln!(out, "correctness: {}", fmt_num(report.correctness))?;
    writeln!(out, "relations: {}/{}", report.held, report.relations)?;
    for v in &report.violations {
        writeln!(out, "violation: {v}")?;
    }
    Ok(())
}

/// Observation block fed back to the model after a turn: one line per
/// completion, failure, interruption or reset.
pub fn feedback(events: &[ExecutionEvent]) -> String {
    let mut s = String::from("[observation]\n");
    for e in events {
        if !matches!(
            e.kind,
            EventKind::Completed | EventKind::Failed | EventKind::Interrupted | EventKind::Reset
        ) {
            continue;
        }
        let args = serde_json::Value::Object(e.args.clone());
        let _ = write!(s, "{:?} {}{} on {} at {}ms", e.kind, e.function, args, e.channel, e.t_ms);
        if !e.detail.is_empty() {
            let _ = write!(s, ": {}", e.detail);
        }
        s.push('\n');
    }
    s.push_str("[/observation]");
    s
}

/// Fills the body template.
pub fn render_body(template: &str, system: &str, messages: &serde_json::Value) -> String {
    template
        .replace("{{system}}", &serde_json::Value::from(system).to_string())
        .replace("{{messages}}", &messages.to_string())
}

/// Copies every delivered chunk into a shared transcript.
struct Recording {
    inner: ChunkSource,
    text: Arc<Mutex<String>>,
}

impl Iterator for Recording {
    type Item = SourceItem;

    fn next(&mut self) -> Option<SourceItem> {
        let item = self.inner.next()?;
        if let Ok(c) = &item {
            self.text.lock().expect("transcript lock").push_str(&c.text);
        }
        Some(item)
    }
}

fn cmd_repl(
    endpoint: &str,
    registry: &Path,
    scenario: &Path,
    body_template: Option<&Path>,
    max_turns: Option<usize>,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> CmdResult {
    let registry = Arc::new(load_registry(registry)?);
    let scenario = load_scenario(scenario)?;
    let template = match body_template {
        Some(p) => read(p)?,
        None => DEFAULT_BODY_TEMPLATE.to_string(),
    };
    let system = registry.render_prompt();
    let api_key = std::env::var(API_KEY_ENV).ok();
    let mut messages: Vec<serde_json::Value> = Vec::new();
    let mut observation: Option<String> = None;
    let mut turns = 0;

    loop {
        if max_turns.is_some_and(|m| turns >= m) {
            break;
        }
        write!(out, "> ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim();
        if line == "/quit" {
            break;
        }
        if line.is_empty() {
            continue;
        }
        turns += 1;
        let content = match observation.take() {
            Some(obs) => format!("{obs}\n{line}"),
            None => line.to_string(),
        };
        messages.push(serde_json::json!({"role": "user", "content": content}));
        let body = render_body(&template, &system, &serde_json::Value::Array(messages.clone()));
        let mut config = LiveConfig::new(endpoint, body);
        if let Some(key) = &api_key {
            config = config.header("authorization", format!("Bearer {key}"));
        }
        let live = open_live(&config)?;
        let transcript = Arc::new(Mutex::new(String::new()));
        let source: ChunkSource = Box::new(Recording {
            inner: live,
            text: transcript.clone(),
        });
        let program = Program::new(registry.clone(), scenario.clone())?;
        let outcome = run_tracked(program, source);
        let reply = transcript.lock().expect("transcript lock").clone();
        writeln!(out, "{reply}")?;
        for e in &outcome.trace.events {
            writeln!(out, "  [{:>6}ms] {:?} {} {}", e.t_ms, e.kind, e.function, e.detail)?;
        }
        if let Some(crate::executor::RunError::Source(m)) = &outcome.error {
            return Err(Failure(format!("stream failed: {m}")));
        }
        if let Some(e) = &outcome.error {
            writeln!(out, "  run error: {e}")?;
        }
        messages.push(serde_json::json!({"role": "assistant", "content": reply}));
        observation = Some(feedback(&outcome.trace.events));
    }
    Ok(())
}
