//! Runs a streamed program against a registry.
//!
//! [`Program`] wires the pipeline (parser, element builder, mapper,
//! scheduler) to channel workers and records every observable step as an
//! [`ExecutionEvent`]. With [`ClockMode::Virtual`] time is simulated and runs
//! are deterministic; [`ClockMode::Realtime`] sleeps for real.
//!
//! ```
//! use std::sync::Arc;
//! use fnstream::executor::{run_program, ScenarioConfig};
//! use fnstream::registry::{Form, FunctionDescriptor, Registry, SimulatedAction};
//! use fnstream::scheduler::ChannelDecl;
//! use fnstream::source::immediate;
//!
//! let mut registry = Registry::new();
//! registry
//!     .register(FunctionDescriptor::new("wave", "arm").forms(&[Form::Atomic]).duration_ms(300), SimulatedAction)
//!     .unwrap();
//! registry.set_channels(vec![ChannelDecl::main("main"), ChannelDecl::sub("arm")]);
//!
//! let outcome = run_program(immediate(["<wave/><wave/>"]), Arc::new(registry), ScenarioConfig::default()).unwrap();
//! let spans: Vec<_> = outcome.trace.intervals().iter().map(|i| (i.start, i.end)).collect();
//! assert_eq!(spans, vec![(0, 300), (300, 600)]);
//! ```

mod engine;
mod event;
mod realtime;
mod scenario;
mod virtual_clock;

use std::sync::{Arc, Mutex};

use crossbeam_channel::{Receiver, Sender};
use serde::Serialize;

pub use event::{EventBus, EventKind, ExecutionEvent, ExecutionTrace, Interval, TraceError};
pub use scenario::{
    ClockMode, ErrorPolicy, InterruptSpec, ScenarioConfig, ScenarioError, ScheduledInterrupt,
};

use crate::element::ElementError;
use crate::parser::ParseError;
use crate::registry::{MapError, Registry};
use crate::scheduler::{CallId, CallStatus, ChannelId, DispatchState, SchedulerError, StepRef};
use crate::source::ChunkSource;

#[derive(Debug, Clone, thiserror::Error)]
pub enum RunError {
    #[error("invalid setup: {0}")]
    Setup(String),
    #[error("parse error: {0}")]
    Parse(ParseError),
    #[error("{0}")]
    Element(ElementError),
    #[error("{0}")]
    Map(MapError),
    #[error("{0}")]
    Scheduler(SchedulerError),
    #[error("`{function}` failed: {message}")]
    StepFailed { function: String, message: String },
    #[error("stream source failed: {0}")]
    Source(String),
    #[error("{unfinished} calls can never finish")]
    Deadlock { unfinished: usize },
}

/// Per-call timing, in stream order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallSummary {
    pub id: CallId,
    pub function: String,
    pub channel: ChannelId,
    pub parent: Option<CallId>,
    pub is_text: bool,
    /// When the call was resolved from the stream.
    pub arrival: u64,
    /// First step start.
    pub start: Option<u64>,
    /// When the call finished, failed or was interrupted.
    pub end: Option<u64>,
    /// When a spanning call's end tag arrived.
    pub close_t: Option<u64>,
    pub status: CallStatus,
    pub args: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: ExecutionTrace,
    pub calls: Vec<CallSummary>,
    /// Set when the run was aborted (strict policy) or its source failed.
    pub error: Option<RunError>,
    pub elapsed_ms: u64,
    pub final_state: DispatchState,
}

impl RunOutcome {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

pub(crate) enum Msg {
    Chunk(String),
    SourceDone,
    SourceFailed(String),
    Done {
        step: StepRef,
        result: Result<String, String>,
    },
    Interrupt(InterruptSpec),
}

#[derive(Default)]
struct HandleState {
    requested: Option<InterruptSpec>,
    waker: Option<Sender<Msg>>,
    finished: bool,
}

/// Requests termination of a running program from any thread. Interrupting
/// a finished program does nothing.
#[derive(Clone, Default)]
pub struct InterruptHandle {
    state: Arc<Mutex<HandleState>>,
}

impl std::fmt::Debug for InterruptHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InterruptHandle").finish_non_exhaustive()
    }
}

impl InterruptHandle {
    pub fn interrupt(&self, spec: InterruptSpec) {
        let mut st = self.state.lock().expect("interrupt lock");
        if st.finished {
            return;
        }
        match &st.waker {
            Some(w) => {
                let _ = w.send(Msg::Interrupt(spec));
            }
            None => st.requested = Some(spec),
        }
    }

    fn take_request(&self) -> Option<InterruptSpec> {
        self.state.lock().expect("interrupt lock").requested.take()
    }

    /// Routes later requests to `waker`; returns one made earlier.
    fn install(&self, waker: Sender<Msg>) -> Option<InterruptSpec> {
        let mut st = self.state.lock().expect("interrupt lock");
        st.waker = Some(waker);
        st.requested.take()
    }

    fn uninstall(&self) {
        let mut st = self.state.lock().expect("interrupt lock");
        st.waker = None;
        st.finished = true;
        st.requested = None;
    }
}

/// A configured program, ready to run once.
pub struct Program {
    registry: Arc<Registry>,
    scenario: ScenarioConfig,
    bus: EventBus,
    handle: InterruptHandle,
}

impl Program {
    pub fn new(registry: Arc<Registry>, scenario: ScenarioConfig) -> Result<Self, RunError> {
        engine::resolve_channels(&registry, &scenario)?;
        Ok(Self {
            registry,
            scenario,
            bus: EventBus::default(),
            handle: InterruptHandle::default(),
        })
    }

    /// Events of the coming run, in `seq` order. The receiver ends when the
    /// run does.
    pub fn subscribe(&self) -> Receiver<ExecutionEvent> {
        self.bus.subscribe()
    }

    pub fn interrupt_handle(&self) -> InterruptHandle {
        self.handle.clone()
    }

    pub fn run(self, source: ChunkSource) -> RunOutcome {
        let channels = engine::resolve_channels(&self.registry, &self.scenario)
            .expect("validated in Program::new");
        let interrupts = self.scenario.interrupts.clone();
        let mode = self.scenario.clock_mode;
        let mut engine = engine::Engine::new(self.registry, self.scenario, self.bus)
            .expect("validated in Program::new");
        match mode {
            ClockMode::Virtual => {
                virtual_clock::run(&mut engine, source, interrupts, &self.handle);
                self.handle.uninstall();
            }
            ClockMode::Realtime => {
                realtime::run(&mut engine, &channels, source, interrupts, &self.handle)
            }
        }
        engine.into_outcome()
    }
}

/// Runs `source` to completion.
pub fn run_program(
    source: ChunkSource,
    registry: Arc<Registry>,
    scenario: ScenarioConfig,
) -> Result<RunOutcome, RunError> {
    Ok(Program::new(registry, scenario)?.run(source))
}
