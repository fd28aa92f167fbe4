//! Clock-agnostic core: parser, element builder, mapper and scheduler wired
//! together. Drivers own time; they advance the engine's clock, feed chunks,
//! start the jobs it hands out and report completions back.

use std::collections::HashMap;
use std::sync::Arc;

use super::event::{EventBus, EventKind, ExecutionEvent};
use super::scenario::{ErrorPolicy, InterruptSpec, ScenarioConfig};
use super::{CallSummary, RunError, RunOutcome};
use crate::element::{ElementBuilder, ElementEventKind, ElementForm, ElementId};
use crate::parser::{ParseEvent, ParserOptions, StreamParser};
use crate::registry::{CallContext, CancelToken, Form, FunctionImpl, Registry, Value};
use crate::scheduler::{
    CallId, ChannelDecl, ChannelId, Scheduler, StepKind, StepOutcome, StepRef,
};

/// A started step, ready to be executed by a driver.
pub(crate) struct Job {
    pub step: StepRef,
    pub channel: ChannelId,
    pub function: String,
    pub args: Vec<(String, Value)>,
    pub implementation: Arc<dyn FunctionImpl>,
    pub duration_ms: u64,
    pub cancel: CancelToken,
}

impl Job {
    pub fn execute(&self) -> Result<String, String> {
        self.implementation.call(&CallContext {
            function: &self.function,
            step: self.step.step,
            args: &self.args,
            cancel: &self.cancel,
        })
    }
}

#[derive(Debug, Clone, Default)]
struct Track {
    arrival: u64,
    start: Option<u64>,
    end: Option<u64>,
    close_t: Option<u64>,
}

pub(crate) struct Engine {
    registry: Arc<Registry>,
    scenario: ScenarioConfig,
    bus: EventBus,
    parser: StreamParser,
    builder: ElementBuilder,
    sched: Scheduler,
    element_calls: HashMap<ElementId, CallId>,
    tracks: Vec<Track>,
    cancels: HashMap<CallId, CancelToken>,
    events: Vec<ExecutionEvent>,
    error: Option<RunError>,
    input_closed: bool,
    parse_stopped: bool,
    terminated: bool,
    now: u64,
}

/// Channels used for a run, checked against the registry.
pub(crate) fn resolve_channels(
    registry: &Registry,
    scenario: &ScenarioConfig,
) -> Result<Vec<ChannelDecl>, RunError> {
    scenario
        .validate()
        .map_err(|e| RunError::Setup(e.to_string()))?;
    let channels = if scenario.channels.is_empty() {
        registry.channels().to_vec()
    } else {
        scenario.channels.clone()
    };
    let sched = Scheduler::new(&channels).map_err(|e| RunError::Setup(e.to_string()))?;
    for d in registry.descriptors() {
        let rerouted = registry.text_function() == Some(d.name.as_str()) || registry.is_wait(&d.name);
        if !rerouted && !sched.has_channel(&d.default_channel) {
            return Err(RunError::Setup(format!(
                "function `{}` uses undeclared channel `{}`",
                d.name, d.default_channel
            )));
        }
    }
    Ok(channels)
}

fn args_json(args: &[(String, Value)]) -> serde_json::Map<String, serde_json::Value> {
    args.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()
}

impl Engine {
    pub fn new(
        registry: Arc<Registry>,
        scenario: ScenarioConfig,
        bus: EventBus,
    ) -> Result<Self, RunError> {
        let channels = resolve_channels(&registry, &scenario)?;
        let sched = Scheduler::new(&channels).map_err(|e| RunError::Setup(e.to_string()))?;
        Ok(Self {
            registry,
            scenario,
            bus,
            parser: StreamParser::with_options(ParserOptions {
                merge_references: true,
            }),
            builder: ElementBuilder::new(),
            sched,
            element_calls: HashMap::new(),
            tracks: Vec::new(),
            cancels: HashMap::new(),
            events: Vec::new(),
            error: None,
            input_closed: false,
            parse_stopped: false,
            terminated: false,
            now: 0,
        })
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    /// Moves the clock forward; it never goes back.
    pub fn advance(&mut self, t: u64) {
        self.now = self.now.max(t);
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn input_closed(&self) -> bool {
        self.input_closed
    }

    pub fn is_done(&self) -> bool {
        self.terminated || (self.input_closed && self.sched.is_idle())
    }

    /// Input is over, work remains, and nothing can ever start.
    pub fn stalled(&self) -> bool {
        !self.terminated
            && self.input_closed
            && !self.sched.is_idle()
            && self.sched.snapshot().running.is_empty()
            && self.sched.next_dispatchable().is_empty()
    }

    pub fn unfinished(&self) -> usize {
        self.sched.unfinished().len()
    }

    fn strict(&self) -> bool {
        self.scenario.error_policy == ErrorPolicy::Strict
    }

    fn emit(
        &mut self,
        kind: EventKind,
        channel: ChannelId,
        function: String,
        args: serde_json::Map<String, serde_json::Value>,
        detail: String,
    ) {
        let event = ExecutionEvent {
            seq: self.events.len() as u64,
            t_ms: self.now,
            kind,
            channel,
            function,
            args,
            detail,
        };
        self.bus.publish(&event);
        self.events.push(event);
    }

    fn emit_call(&mut self, kind: EventKind, id: CallId, detail: String) {
        let call = self.sched.call(id).expect("admitted call");
        let channel = self.sched.channel_of(id).expect("admitted call").clone();
        let function = call.name().to_string();
        let args = args_json(&call.named_args());
        self.emit(kind, channel, function, args, detail);
    }

    // ---- input ----

    pub fn feed(&mut self, text: &str) {
        if self.terminated || self.parse_stopped || self.input_closed {
            return;
        }
        let Ok(events) = self.parser.feed_str(text) else {
            return;
        };
        for ev in events {
            if self.terminated || self.parse_stopped {
                break;
            }
            self.on_parse_event(ev);
        }
    }

    pub fn close_input(&mut self) {
        if self.input_closed {
            return;
        }
        if !self.terminated && !self.parse_stopped {
            if let Ok(events) = self.parser.finish() {
                for ev in events {
                    if self.terminated || self.parse_stopped {
                        break;
                    }
                    self.on_parse_event(ev);
                }
            }
            if !self.terminated && !self.parse_stopped {
                if let Err(e) = self.builder.finish() {
                    self.stream_error(RunError::Element(e));
                }
            }
        }
        self.input_closed = true;
    }

    pub fn source_failed(&mut self, message: String) {
        let err = RunError::Source(message);
        if self.error.is_none() {
            self.error = Some(err.clone());
        }
        if !self.terminated && !self.parse_stopped {
            self.stream_error(err);
        }
        self.input_closed = true;
    }

    fn on_parse_event(&mut self, ev: ParseEvent) {
        match ev {
            ParseEvent::Token(tok) => match self.builder.apply_token(&tok) {
                Ok(events) => {
                    for e in events {
                        if self.terminated {
                            break;
                        }
                        self.on_element_event(e.kind, e.element);
                    }
                }
                Err(e) => self.stream_error(RunError::Element(e)),
            },
            ParseEvent::Error(e) => self.stream_error(RunError::Parse(e)),
        }
    }

    /// Unrecoverable problem with the stream itself.
    fn stream_error(&mut self, err: RunError) {
        let main = self.sched.main_channel().clone();
        self.emit(EventKind::Failed, main, String::new(), Default::default(), err.to_string());
        self.parse_stopped = true;
        if self.strict() {
            self.abort(err);
        } else {
            self.close_open_elements();
        }
    }

    fn close_open_elements(&mut self) {
        let open: Vec<ElementId> = self.builder.open_elements().iter().rev().copied().collect();
        for e in open {
            if let Some(&id) = self.element_calls.get(&e) {
                self.close_call(id);
            }
        }
    }

    fn close_call(&mut self, id: CallId) {
        if self.tracks[id.0].close_t.is_some() {
            return;
        }
        self.tracks[id.0].close_t = Some(self.now);
        if let Err(e) = self.sched.enqueue(id, StepKind::Reset) {
            let name = self.sched.call(id).map(|c| c.name().to_string()).unwrap_or_default();
            self.call_error(name, None, RunError::Scheduler(e));
        }
    }

    fn on_element_event(&mut self, kind: ElementEventKind, id: ElementId) {
        match kind {
            ElementEventKind::Opened => self.admit_element(id),
            ElementEventKind::TextArrived => {
                let text = self.builder.text(id).to_string();
                if self.scenario.skip_whitespace_text && text.trim().is_empty() {
                    return;
                }
                let direct = self
                    .builder
                    .parent(id)
                    .and_then(|p| self.element_calls.get(&p).copied());
                if let Some(p) = direct {
                    let call = self.sched.call(p).expect("admitted call");
                    if call.function.accepts_text_content {
                        let cap = self.registry.options().text_cap;
                        let name = call.name().to_string();
                        let result = self.sched.call_mut(p).expect("admitted call").append_text(&text, cap);
                        if let Err(e) = result {
                            self.call_error(name, None, RunError::Map(e));
                        }
                        return;
                    }
                }
                self.admit_element(id);
            }
            ElementEventKind::Closed => {
                if self.builder.form(id) == ElementForm::Spanning {
                    if let Some(&call) = self.element_calls.get(&id) {
                        self.close_call(call);
                    }
                }
            }
            ElementEventKind::ChildAttached => {}
        }
    }

    fn parent_call(&self, id: ElementId) -> Option<CallId> {
        let mut cur = self.builder.parent(id);
        while let Some(p) = cur {
            if let Some(&c) = self.element_calls.get(&p) {
                return Some(c);
            }
            cur = self.builder.parent(p);
        }
        None
    }

    fn admit_element(&mut self, id: ElementId) {
        let element = self.builder.element(id);
        let call = match self.registry.resolve(&element) {
            Ok(c) => c,
            Err(e) => {
                let channel = self
                    .registry
                    .descriptor(&element.name)
                    .map(|d| d.default_channel.clone());
                self.call_error(element.name.clone(), channel, RunError::Map(e));
                return;
            }
        };
        let name = call.name().to_string();
        let spanning = call.form_used == Form::Spanning;
        let is_wait = self.registry.is_wait(&name);
        let parent = self.parent_call(id);
        let cid = match self.sched.admit(call, parent) {
            Ok(c) => c,
            Err(e) => return self.call_error(name, None, RunError::Scheduler(e)),
        };
        self.tracks.push(Track {
            arrival: self.now,
            ..Track::default()
        });
        if is_wait {
            let main = self.sched.main_channel().clone();
            if let Err(e) = self.sched.reassign(cid, main) {
                return self.call_error(name, None, RunError::Scheduler(e));
            }
        }
        let step = if spanning { StepKind::Activate } else { StepKind::Invoke };
        if let Err(e) = self.sched.enqueue(cid, step) {
            return self.call_error(name, None, RunError::Scheduler(e));
        }
        if spanning {
            self.element_calls.insert(id, cid);
        }
    }

    /// A call could not be mapped or scheduled.
    fn call_error(&mut self, function: String, channel: Option<ChannelId>, err: RunError) {
        let channel = channel
            .filter(|c| self.sched.has_channel(c))
            .unwrap_or_else(|| self.sched.main_channel().clone());
        self.emit(EventKind::Failed, channel, function, Default::default(), err.to_string());
        if self.strict() {
            self.abort(err);
        }
    }

    // ---- execution ----

    fn duration(&self, id: CallId, step: StepKind) -> u64 {
        if step != StepKind::Invoke {
            return 0;
        }
        let call = self.sched.call(id).expect("admitted call");
        if call.is_text {
            let text = call
                .function
                .text_param()
                .and_then(|i| call.args[i].as_str())
                .unwrap_or("");
            return self.scenario.text_duration(text);
        }
        self.scenario
            .durations
            .get(call.name())
            .copied()
            .unwrap_or(call.function.simulated_duration_ms)
    }

    /// Starts every step that may run now.
    pub fn dispatch(&mut self) -> Vec<Job> {
        if self.terminated {
            return Vec::new();
        }
        let mut jobs = Vec::new();
        for s in self.sched.next_dispatchable() {
            if self.sched.start(s).is_err() {
                continue;
            }
            let call = self.sched.call(s.call).expect("admitted call");
            let function = call.name().to_string();
            let args = call.named_args();
            let channel = self.sched.channel_of(s.call).expect("admitted call").clone();
            let implementation = self
                .registry
                .implementation(&function)
                .expect("registered function has an implementation");
            let duration_ms = self.duration(s.call, s.step);
            let cancel = self.cancels.entry(s.call).or_default().clone();
            let track = &mut self.tracks[s.call.0];
            if track.start.is_none() {
                track.start = Some(self.now);
            }
            if s.step == StepKind::Invoke {
                self.emit_call(EventKind::Invoked, s.call, String::new());
            }
            jobs.push(Job {
                step: s,
                channel,
                function,
                args,
                implementation,
                duration_ms,
                cancel,
            });
        }
        jobs
    }

    pub fn complete(&mut self, step: StepRef, result: Result<String, String>) {
        if self.terminated {
            return;
        }
        let outcome = if result.is_ok() {
            StepOutcome::Ok
        } else {
            StepOutcome::Failed
        };
        if self.sched.complete(step, outcome).is_err() {
            return;
        }
        let is_text = self.sched.call(step.call).is_some_and(|c| c.is_text);
        let failure = match result {
            Ok(detail) => {
                let kind = match step.step {
                    StepKind::Activate => EventKind::Activated,
                    StepKind::Invoke if is_text => EventKind::TextSpoken,
                    StepKind::Invoke => EventKind::Completed,
                    StepKind::Reset => EventKind::Reset,
                };
                self.emit_call(kind, step.call, detail);
                None
            }
            Err(message) => {
                self.emit_call(EventKind::Failed, step.call, message.clone());
                Some(message)
            }
        };
        if self
            .sched
            .status(step.call)
            .is_some_and(|s| s.is_terminal())
        {
            self.tracks[step.call.0].end = Some(self.now);
            self.cancels.remove(&step.call);
        }
        if let Some(message) = failure {
            if self.strict() {
                let function = self.sched.call(step.call).expect("admitted call").name().to_string();
                self.abort(RunError::StepFailed { function, message });
            }
        }
    }

    /// Stops the program: every started call is reported as interrupted,
    /// activated spanning calls are reset, queued work is dropped.
    pub fn interrupt(&mut self, spec: &InterruptSpec) {
        if self.terminated {
            return;
        }
        self.terminated = true;
        let in_flight = self.sched.interrupt();
        for f in &in_flight {
            if let Some(token) = self.cancels.remove(&f.call) {
                token.cancel();
            }
            self.tracks[f.call.0].end = Some(self.now);
            self.emit_call(EventKind::Interrupted, f.call, spec.reason.clone());
        }
        for f in in_flight.iter().rev().filter(|f| f.needs_reset) {
            let call = self.sched.call(f.call).expect("admitted call");
            let function = call.name().to_string();
            let args = call.named_args();
            let detail = match self.registry.implementation(&function) {
                Some(imp) => {
                    let token = CancelToken::new();
                    let ctx = CallContext {
                        function: &function,
                        step: StepKind::Reset,
                        args: &args,
                        cancel: &token,
                    };
                    imp.call(&ctx).unwrap_or_else(|e| e)
                }
                None => String::new(),
            };
            self.emit_call(EventKind::Reset, f.call, detail);
        }
    }

    pub fn abort(&mut self, err: RunError) {
        let reason = err.to_string();
        if self.error.is_none() {
            self.error = Some(err);
        }
        self.interrupt(&InterruptSpec::new(reason));
    }

    pub fn into_outcome(self) -> RunOutcome {
        self.bus.close();
        let calls = (0..self.sched.len())
            .map(|i| {
                let id = CallId(i);
                let call = self.sched.call(id).expect("admitted call");
                let track = self.tracks.get(i).cloned().unwrap_or_default();
                CallSummary {
                    id,
                    function: call.name().to_string(),
                    channel: self.sched.channel_of(id).expect("admitted call").clone(),
                    parent: self.sched.parent(id),
                    is_text: call.is_text,
                    arrival: track.arrival,
                    start: track.start,
                    end: track.end,
                    close_t: track.close_t,
                    status: self.sched.status(id).expect("admitted call"),
                    args: args_json(&call.named_args()),
                }
            })
            .collect();
        RunOutcome {
            trace: super::ExecutionTrace::new(self.events),
            calls,
            error: self.error,
            elapsed_ms: self.now,
            final_state: self.sched.snapshot(),
        }
    }
}
