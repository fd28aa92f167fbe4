//! Random generators and oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use fnstream::element::{Element, ElementForm};
use fnstream::executor::{run_program, CallSummary, RunOutcome, ScenarioConfig};
use fnstream::registry::{
    Form, FunctionDescriptor, ParamSpec, ParamType, Registry, RegistryManifest, SimulatedAction,
};
use fnstream::scheduler::{CallStatus, ChannelDecl};
use fnstream::source::{read_trace, timed, TimedChunk, TraceRecord};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

/// Registry, scenario and recorded stream of a fixture directory.
pub fn load_case(dir: &str) -> (Arc<Registry>, ScenarioConfig, Vec<TraceRecord>) {
    let registry = RegistryManifest::load(fixture(dir).join("registry.json"))
        .unwrap()
        .into_registry()
        .unwrap();
    let scenario = ScenarioConfig::load(fixture(dir).join("scenario.json")).unwrap();
    let text = std::fs::read_to_string(fixture(dir).join("stream.jsonl")).unwrap();
    (Arc::new(registry), scenario, read_trace(&text).unwrap())
}

pub const CASES: &[&str] = &["patterns/sequential", "patterns/parallel", "patterns/condition", "patterns/event", "robot"];

// ---------------------------------------------------------------- streams

const NAMES: &[&str] = &["a", "move", "F1", "_x", "x-y", "v.2", "é", "wait", "中文"];
const ATTRS: &[&str] = &["p", "speed", "dir", "x_1", "ü"];
const TEXT_CHARS: &[&str] = &[
    "a", "b", "Z", "0", " ", " ", "\n", "\t", ">", "]", "'", "\"", "é", "中", "🤖", "=", "/",
    "&amp;", "&lt;", "&gt;", "&quot;", "&apos;", "&#65;", "&#x1F600;", "&#233;",
];
const VALUE_CHARS: &[&str] = &[
    "a", "Q", "1", " ", "-", ".", ">", "é", "🤖", "&amp;", "&lt;", "&#x41;", "&#10;", "'", "\"",
];

fn pick<'a>(rng: &mut StdRng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("non-empty pool")
}

fn gen_text(rng: &mut StdRng, max: usize) -> String {
    let n = rng.gen_range(1..=max);
    let mut s = String::new();
    for _ in 0..n {
        s.push_str(pick(rng, TEXT_CHARS));
    }
    s
}

fn gen_value(rng: &mut StdRng, quote: char) -> String {
    let n = rng.gen_range(0..6);
    let mut s = String::new();
    for _ in 0..n {
        let piece = pick(rng, VALUE_CHARS);
        if piece.len() == 1 && piece.starts_with(quote) {
            s.push_str(if quote == '"' { "&quot;" } else { "&apos;" });
        } else {
            s.push_str(piece);
        }
    }
    s
}

fn gen_open(rng: &mut StdRng, name: &str) -> String {
    let mut s = format!("<{name}");
    let mut attrs: Vec<&str> = ATTRS.to_vec();
    attrs.shuffle(rng);
    for a in attrs.iter().take(rng.gen_range(0..3)) {
        let quote = if rng.gen_bool(0.5) { '"' } else { '\'' };
        let space = if rng.gen_bool(0.2) { "  " } else { " " };
        let eq = if rng.gen_bool(0.1) { " = " } else { "=" };
        s.push_str(&format!("{space}{a}{eq}{quote}{}{quote}", gen_value(rng, quote)));
    }
    if rng.gen_bool(0.1) {
        s.push(' ');
    }
    s
}

fn gen_nodes(rng: &mut StdRng, depth: usize, out: &mut String) {
    for _ in 0..rng.gen_range(0..4) {
        match rng.gen_range(0..3) {
            0 => out.push_str(&gen_text(rng, 12)),
            1 => {
                let name = pick(rng, NAMES);
                out.push_str(&gen_open(rng, name));
                out.push_str("/>");
            }
            _ if depth < 4 => {
                let name = pick(rng, NAMES);
                out.push_str(&gen_open(rng, name));
                out.push('>');
                gen_nodes(rng, depth + 1, out);
                out.push_str(&format!("</{name}"));
                if rng.gen_bool(0.1) {
                    out.push(' ');
                }
                out.push('>');
            }
            _ => out.push_str(&gen_text(rng, 4)),
        }
    }
}

/// A random well-formed stream: text, references, nested and self-contained
/// tags with quoted parameters.
pub fn gen_stream(rng: &mut StdRng) -> String {
    let mut s = String::new();
    gen_nodes(rng, 0, &mut s);
    s.replace("]]>", "]]&gt;")
}

/// Splits at random character boundaries; empty pieces allowed.
pub fn partition(rng: &mut StdRng, s: &str) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let n = rng.gen_range(0..=4.min(chars.len() - i + 1));
        out.push(chars[i..(i + n).min(chars.len())].iter().collect());
        i += n;
    }
    if rng.gen_bool(0.2) {
        out.push(String::new());
    }
    out
}

// ---------------------------------------------------------------- forests

fn gen_plain_text(rng: &mut StdRng) -> String {
    const CHARS: &[char] = &['a', 'z', ' ', '<', '>', '&', '"', '\'', '\n', '\t', 'é', '中', '🤖', ']'];
    let n = rng.gen_range(1..8);
    (0..n).map(|_| *CHARS.choose(rng).unwrap()).collect()
}

fn gen_params(rng: &mut StdRng) -> Vec<(String, String)> {
    let mut attrs: Vec<&str> = ATTRS.to_vec();
    attrs.shuffle(rng);
    attrs
        .iter()
        .take(rng.gen_range(0..3))
        .map(|a| (a.to_string(), gen_plain_text(rng).chars().take(rng.gen_range(0..5)).collect()))
        .collect()
}

fn gen_children(rng: &mut StdRng, depth: usize) -> Vec<Element> {
    let mut out: Vec<Element> = Vec::new();
    for _ in 0..rng.gen_range(0..4) {
        let last_text = out.last().is_some_and(|e| e.form == ElementForm::CharacterRun);
        let e = match rng.gen_range(0..3) {
            0 if !last_text => Element::text(gen_plain_text(rng)),
            1 | 0 => Element::self_contained(pick(rng, NAMES), gen_params(rng)),
            _ if depth < 4 => {
                Element::spanning(pick(rng, NAMES), gen_params(rng), gen_children(rng, depth + 1))
            }
            _ => Element::self_contained(pick(rng, NAMES), Vec::new()),
        };
        out.push(e);
    }
    out
}

/// A canonical forest: no empty text runs and no two adjacent ones.
pub fn gen_forest(rng: &mut StdRng) -> Vec<Element> {
    gen_children(rng, 0)
}

// ---------------------------------------------------------------- programs

/// One item of a generated program.
#[derive(Debug, Clone)]
pub enum Item {
    /// Atomic call on a sub channel (1..=3) or on main (0).
    Call { channel: usize, duration: u64 },
    Text(String),
    /// Spanning call on a sub channel, or the wait function when channel is 0.
    Span { channel: usize, children: Vec<Item> },
}

pub fn law_registry() -> Registry {
    let mut r = Registry::new();
    for ch in 0..=3 {
        let channel = if ch == 0 { "main".to_string() } else { format!("C{ch}") };
        for d in 1..=4u64 {
            r.register(
                FunctionDescriptor::new(format!("a{ch}_{d}"), channel.as_str())
                    .forms(&[Form::Atomic])
                    .duration_ms(d * 100),
                SimulatedAction,
            )
            .unwrap();
        }
        if ch > 0 {
            r.register(
                FunctionDescriptor::new(format!("s{ch}"), channel.as_str()).forms(&[Form::Spanning]),
                SimulatedAction,
            )
            .unwrap();
        }
    }
    r.register(
        FunctionDescriptor::new("say", "main").param(ParamSpec::required("text", ParamType::String)),
        SimulatedAction,
    )
    .unwrap();
    r.register(FunctionDescriptor::new("wait", "main").forms(&[Form::Spanning]), SimulatedAction)
        .unwrap();
    r.set_text_function("say").unwrap();
    r.set_wait_function("wait").unwrap();
    r.set_channels(vec![
        ChannelDecl::main("main"),
        ChannelDecl::sub("C1"),
        ChannelDecl::sub("C2"),
        ChannelDecl::sub("C3"),
    ]);
    r
}

pub const TEXT_RATE: f64 = 10.0;

fn count(items: &[Item]) -> usize {
    items
        .iter()
        .map(|i| match i {
            Item::Span { children, .. } => 1 + count(children),
            _ => 1,
        })
        .sum()
}

fn gen_items(rng: &mut StdRng, budget: &mut usize, depth: usize, channels: usize, main_p: f64) -> Vec<Item> {
    let mut out = Vec::new();
    let n = rng.gen_range(if depth == 0 { 1 } else { 0 }..=3);
    for _ in 0..n {
        if *budget == 0 {
            break;
        }
        *budget -= 1;
        let item = if rng.gen_bool(main_p) {
            match rng.gen_range(0..3) {
                0 => Item::Text(["hi", "hello", "ok"].choose(rng).unwrap().to_string()),
                1 => Item::Call { channel: 0, duration: rng.gen_range(1..=4) },
                _ if depth < 2 => Item::Span { channel: 0, children: gen_items(rng, budget, depth + 1, channels, main_p) },
                _ => Item::Text("yo".into()),
            }
        } else if depth < 2 && rng.gen_bool(0.25) {
            Item::Span {
                channel: rng.gen_range(1..=channels),
                children: gen_items(rng, budget, depth + 1, channels, main_p),
            }
        } else {
            Item::Call {
                channel: rng.gen_range(1..=channels),
                duration: rng.gen_range(1..=4),
            }
        };
        out.push(item);
    }
    out
}

/// A random program of at most `max_calls` calls over at most 3 sub channels.
pub fn gen_program(rng: &mut StdRng, max_calls: usize) -> Vec<Item> {
    let channels = rng.gen_range(1..=3);
    let main_p = rng.gen_range(0.0..0.4);
    loop {
        let mut budget = max_calls;
        let items = gen_items(rng, &mut budget, 0, channels, main_p);
        if count(&items) > 0 {
            return items;
        }
    }
}

fn render_items(items: &[Item], out: &mut Vec<String>) {
    for item in items {
        match item {
            Item::Call { channel, duration } => out.push(format!("<a{channel}_{duration}/>")),
            Item::Text(t) => out.push(t.clone()),
            Item::Span { channel, children } => {
                let name = if *channel == 0 { "wait".to_string() } else { format!("s{channel}") };
                out.push(format!("<{name}>"));
                render_items(children, out);
                out.push(format!("</{name}>"));
            }
        }
    }
}

/// Tokens of the program in stream order, each delivered at its own time.
pub fn timed_tokens(rng: &mut StdRng, items: &[Item]) -> Vec<TimedChunk> {
    let mut tokens = Vec::new();
    render_items(items, &mut tokens);
    // adjacent text tokens would merge into one call; join them up front
    let mut merged: Vec<String> = Vec::new();
    for t in tokens {
        match merged.last_mut() {
            Some(last) if !last.ends_with('>') && !t.starts_with('<') => last.push_str(&t),
            _ => merged.push(t),
        }
    }
    let mut t = 0;
    merged
        .into_iter()
        .map(|tok| {
            t += rng.gen_range(0..=3) * 100;
            TimedChunk::new(t, tok)
        })
        .collect()
}

pub fn run_law_program(chunks: Vec<TimedChunk>) -> RunOutcome {
    let scenario = ScenarioConfig {
        text_rate: TEXT_RATE,
        ..ScenarioConfig::default()
    };
    run_program(timed(chunks), Arc::new(law_registry()), scenario).unwrap()
}

// ---------------------------------------------------------------- laws

pub fn is_ancestor(calls: &[CallSummary], a: usize, mut b: usize) -> bool {
    while let Some(p) = calls[b].parent {
        if p.0 == a {
            return true;
        }
        b = p.0;
    }
    false
}

fn is_main(c: &CallSummary) -> bool {
    c.channel.as_str() == "main"
}

/// Checks the scheduling laws on a finished run; returns the violations.
pub fn law_violations(outcome: &RunOutcome) -> Vec<String> {
    let calls = &outcome.calls;
    let mut v = Vec::new();
    if let Some(e) = &outcome.error {
        v.push(format!("run error: {e}"));
    }
    for c in calls {
        if c.status != CallStatus::Done {
            v.push(format!("call {} ended as {:?}", c.id, c.status));
        }
        if c.is_text && !is_main(c) {
            v.push(format!("text call {} on {}", c.id, c.channel));
        }
    }
    if !v.is_empty() {
        return v;
    }
    let start = |i: usize| calls[i].start.unwrap();
    let end = |i: usize| calls[i].end.unwrap();
    for j in 0..calls.len() {
        for i in 0..j {
            if is_ancestor(calls, i, j) {
                continue;
            }
            if calls[i].channel == calls[j].channel && end(i) > start(j) {
                v.push(format!("same-channel overlap: {} [{}, {}] and {} [{}, {}]", i, start(i), end(i), j, start(j), end(j)));
            }
            if is_main(&calls[i]) && start(j) < end(i) {
                v.push(format!("gate: {} starts at {} before main call {} ends at {}", j, start(j), i, end(i)));
            }
        }
        if let Some(p) = calls[j].parent {
            if end(p.0) < end(j) {
                v.push(format!("reset of {} at {} before child {} ends at {}", p, end(p.0), j, end(j)));
            }
        }
    }
    // every call starts as early as the laws allow
    for j in 0..calls.len() {
        let expected = earliest_start(calls, j, &|i| end(i), &|i| start(i));
        if start(j) != expected {
            v.push(format!("call {j} starts at {}, earliest allowed {expected}", start(j)));
        }
        if calls[j].close_t.is_some() {
            let children_end = (0..calls.len())
                .filter(|&c| calls[c].parent.map(|p| p.0) == Some(j))
                .map(end)
                .max()
                .unwrap_or(0);
            let want = start(j).max(calls[j].close_t.unwrap()).max(children_end);
            if end(j) != want {
                v.push(format!("spanning {j} resets at {}, expected {want}", end(j)));
            }
        }
    }
    v
}

/// Earliest start of `j` given the other calls' times.
pub fn earliest_start(
    calls: &[CallSummary],
    j: usize,
    end: &dyn Fn(usize) -> u64,
    start: &dyn Fn(usize) -> u64,
) -> u64 {
    let mut t = calls[j].arrival;
    if let Some(p) = calls[j].parent {
        t = t.max(start(p.0));
    }
    for i in 0..j {
        if is_ancestor(calls, i, j) {
            continue;
        }
        if calls[i].channel == calls[j].channel || is_main(&calls[i]) {
            t = t.max(end(i));
        }
    }
    t
}

/// Brute-force oracle: every assignment of start times drawn from
/// {arrival} ∪ {ends of other calls} that satisfies the laws and is tight
/// (no call could start at a smaller candidate). Returns the start vectors.
pub fn law_consistent_schedules(calls: &[CallSummary], durations: &[u64]) -> Vec<Vec<u64>> {
    let n = calls.len();
    let children: Vec<Vec<usize>> = (0..n)
        .map(|p| (0..n).filter(|&c| calls[c].parent.map(|x| x.0) == Some(p)).collect())
        .collect();
    // ends follow from starts; spanning calls end once closed and their children are done
    let ends_for = |starts: &[u64]| -> Vec<u64> {
        let mut ends = vec![0; n];
        for i in (0..n).rev() {
            ends[i] = match calls[i].close_t {
                Some(close) => children[i]
                    .iter()
                    .map(|&c| ends[c])
                    .fold(starts[i].max(close), u64::max),
                None => starts[i] + durations[i],
            };
        }
        ends
    };
    let lawful = |starts: &[u64], ends: &[u64]| -> bool {
        for j in 0..n {
            if starts[j] < calls[j].arrival {
                return false;
            }
            if let Some(p) = calls[j].parent {
                if starts[j] < starts[p.0] {
                    return false;
                }
            }
            for i in 0..j {
                if is_ancestor(calls, i, j) {
                    continue;
                }
                let blocks = calls[i].channel == calls[j].channel || is_main(&calls[i]);
                if blocks && starts[j] < ends[i] {
                    return false;
                }
            }
        }
        true
    };

    let mut results = Vec::new();
    let mut choice = vec![0usize; n];
    loop {
        // candidates per call: 0 is the arrival, k > 0 the end of call k - 1
        let mut starts: Vec<u64> = calls.iter().map(|c| c.arrival).collect();
        for _ in 0..n + 2 {
            let ends = ends_for(&starts);
            for j in 0..n {
                if choice[j] > 0 {
                    starts[j] = ends[choice[j] - 1];
                }
            }
        }
        let ends = ends_for(&starts);
        let fixed = (0..n).all(|j| choice[j] == 0 || starts[j] == ends[choice[j] - 1]);
        if fixed && lawful(&starts, &ends) {
            let mut candidates: Vec<u64> = ends.clone();
            candidates.extend(calls.iter().map(|c| c.arrival));
            let tight = (0..n).all(|j| {
                candidates.iter().filter(|&&c| c < starts[j]).all(|&c| {
                    let mut alt = starts.clone();
                    alt[j] = c;
                    let alt_ends = ends_for(&alt);
                    !lawful(&alt, &alt_ends)
                })
            });
            if tight && !results.contains(&starts) {
                results.push(starts);
            }
        }
        // next choice vector
        let mut k = 0;
        loop {
            if k == n {
                return results;
            }
            choice[k] += 1;
            if choice[k] <= n {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// Simulated duration of each call, as the oracle sees it.
pub fn call_durations(calls: &[CallSummary]) -> Vec<u64> {
    let durations: HashMap<String, u64> = law_registry()
        .descriptors()
        .map(|d| (d.name.clone(), d.simulated_duration_ms))
        .collect();
    calls
        .iter()
        .map(|c| {
            if c.is_text {
                let text = c.args["text"].as_str().unwrap();
                (text.chars().count() as f64 * TEXT_RATE).round() as u64
            } else {
                durations[&c.function]
            }
        })
        .collect()
}
