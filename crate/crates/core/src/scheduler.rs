//! Multi-channel dispatch core.
//!
//! The scheduler knows nothing about time. Callers admit [`BoundCall`]s in
//! stream order, enqueue their lifecycle steps, ask which steps may start,
//! and report when steps finish. A step may start only when:
//!
//! - no other step is executing on its channel;
//! - every earlier call on the same channel has completed, unless that call
//!   is an ancestor (a spanning call lends its channel to nested calls);
//! - every earlier call on the main channel has completed, again excluding
//!   ancestors (the global gate);
//! - its parent has been activated;
//! - for a reset, the end tag has been seen and every child has completed.
//!
//! Calls resolved from character data always run on the main channel.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::registry::{BoundCall, Form, MapError, Registry};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(pub String);

impl ChannelId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for ChannelId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for ChannelId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    #[serde(alias = "Main")]
    Main,
    #[serde(alias = "Sub")]
    Sub,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelDecl {
    pub id: ChannelId,
    pub kind: ChannelKind,
}

impl ChannelDecl {
    pub fn main(id: &str) -> Self {
        Self {
            id: id.into(),
            kind: ChannelKind::Main,
        }
    }

    pub fn sub(id: &str) -> Self {
        Self {
            id: id.into(),
            kind: ChannelKind::Sub,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StepKind {
    Activate,
    Invoke,
    Reset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallId(pub usize);

impl fmt::Display for CallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StepRef {
    pub call: CallId,
    pub step: StepKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallStatus {
    Admitted,
    Queued,
    Running,
    /// Spanning call activated and holding its channel.
    Active,
    Done,
    Failed,
    Cancelled,
}

impl CallStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, CallStatus::Done | CallStatus::Failed | CallStatus::Cancelled)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("invalid channel set: {0}")]
    InvalidChannels(String),
    #[error("unknown channel `{0}`")]
    UnknownChannel(ChannelId),
    #[error("unknown call {0}")]
    UnknownCall(CallId),
    #[error("call {0} is already enqueued")]
    AlreadyEnqueued(CallId),
    #[error("lifecycle violation for call {call}: {reason}")]
    LifecycleViolation { call: CallId, reason: String },
    #[error("step {step:?} of call {call} is not dispatchable")]
    NotDispatchable { call: CallId, step: StepKind },
    #[error("no wait function is registered")]
    NoWaitFunction,
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone)]
struct CallRecord {
    call: BoundCall,
    parent: Option<CallId>,
    channel_override: Option<ChannelId>,
    channel: ChannelId,
    enqueued: bool,
    status: CallStatus,
    activate_enqueued: bool,
    activated: bool,
    reset_enqueued: bool,
    incomplete_children: usize,
}

/// A call that was started but not finished when the scheduler was
/// interrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InFlight {
    pub call: CallId,
    /// Step executing at the time, if any.
    pub running: Option<StepKind>,
    /// Spanning call that had been activated and needs a forced reset.
    pub needs_reset: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Gate {
    Open,
    Closed { owner: CallId },
}

/// Read-only view of the dispatch state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DispatchState {
    pub gate: Gate,
    pub queues: BTreeMap<ChannelId, Vec<StepRef>>,
    pub running: Vec<StepRef>,
    pub pending_children: BTreeMap<CallId, usize>,
}

impl DispatchState {
    pub fn queued_len(&self) -> usize {
        self.queues.values().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    channels: Vec<ChannelDecl>,
    main: ChannelId,
    busy: BTreeMap<ChannelId, StepRef>,
    calls: Vec<CallRecord>,
    queue: Vec<StepRef>,
    // calls below this index are all terminal
    settled: usize,
}

impl Scheduler {
    pub fn new(channels: &[ChannelDecl]) -> Result<Self, SchedulerError> {
        let mains: Vec<_> = channels
            .iter()
            .filter(|c| c.kind == ChannelKind::Main)
            .collect();
        if mains.len() != 1 {
            return Err(SchedulerError::InvalidChannels(format!(
                "expected exactly one main channel, found {}",
                mains.len()
            )));
        }
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].iter().any(|d| d.id == c.id) {
                return Err(SchedulerError::InvalidChannels(format!(
                    "channel `{}` declared twice",
                    c.id
                )));
            }
        }
        Ok(Self {
            main: mains[0].id.clone(),
            channels: channels.to_vec(),
            busy: BTreeMap::new(),
            calls: Vec::new(),
            queue: Vec::new(),
            settled: 0,
        })
    }

    pub fn main_channel(&self) -> &ChannelId {
        &self.main
    }

    pub fn channels(&self) -> &[ChannelDecl] {
        &self.channels
    }

    pub fn has_channel(&self, id: &ChannelId) -> bool {
        self.channels.iter().any(|c| &c.id == id)
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    fn rec(&self, id: CallId) -> Result<&CallRecord, SchedulerError> {
        self.calls.get(id.0).ok_or(SchedulerError::UnknownCall(id))
    }

    fn rec_mut(&mut self, id: CallId) -> Result<&mut CallRecord, SchedulerError> {
        self.calls.get_mut(id.0).ok_or(SchedulerError::UnknownCall(id))
    }

    pub fn call(&self, id: CallId) -> Option<&BoundCall> {
        self.calls.get(id.0).map(|r| &r.call)
    }

    pub fn call_mut(&mut self, id: CallId) -> Option<&mut BoundCall> {
        self.calls.get_mut(id.0).map(|r| &mut r.call)
    }

    pub fn parent(&self, id: CallId) -> Option<CallId> {
        self.calls.get(id.0).and_then(|r| r.parent)
    }

    pub fn status(&self, id: CallId) -> Option<CallStatus> {
        self.calls.get(id.0).map(|r| r.status)
    }

    pub fn channel_of(&self, id: CallId) -> Option<&ChannelId> {
        self.calls.get(id.0).map(|r| &r.channel)
    }

    /// Whether `ancestor` is a strict ancestor of `id`.
    pub fn is_ancestor(&self, ancestor: CallId, id: CallId) -> bool {
        let mut cur = self.parent(id);
        while let Some(p) = cur {
            if p == ancestor {
                return true;
            }
            cur = self.parent(p);
        }
        false
    }

    /// Registers a call in stream order. `parent` is the innermost enclosing
    /// spanning call.
    pub fn admit(&mut self, call: BoundCall, parent: Option<CallId>) -> Result<CallId, SchedulerError> {
        if let Some(p) = parent {
            let prec = self.rec(p)?;
            if prec.call.form_used != Form::Spanning {
                return Err(SchedulerError::LifecycleViolation {
                    call: p,
                    reason: "only spanning calls can have children".into(),
                });
            }
        }
        let id = CallId(self.calls.len());
        let channel = call.channel.clone();
        self.calls.push(CallRecord {
            call,
            parent,
            channel_override: None,
            channel,
            enqueued: false,
            status: CallStatus::Admitted,
            activate_enqueued: false,
            activated: false,
            reset_enqueued: false,
            incomplete_children: 0,
        });
        Ok(id)
    }

    /// Effective channel: text calls go to the main channel, otherwise a
    /// reassignment wins over the descriptor default.
    pub fn assign_channel(&self, id: CallId) -> Result<ChannelId, SchedulerError> {
        let rec = self.rec(id)?;
        let channel = if rec.call.is_text {
            self.main.clone()
        } else {
            rec.channel_override
                .clone()
                .unwrap_or_else(|| rec.call.function.default_channel.clone())
        };
        if !self.has_channel(&channel) {
            return Err(SchedulerError::UnknownChannel(channel));
        }
        Ok(channel)
    }

    pub fn reassign(&mut self, id: CallId, channel: ChannelId) -> Result<(), SchedulerError> {
        if !self.has_channel(&channel) {
            return Err(SchedulerError::UnknownChannel(channel));
        }
        let rec = self.rec_mut(id)?;
        if rec.enqueued {
            return Err(SchedulerError::AlreadyEnqueued(id));
        }
        rec.call.channel = channel.clone();
        rec.channel_override = Some(channel);
        Ok(())
    }

    pub fn enqueue(&mut self, id: CallId, step: StepKind) -> Result<(), SchedulerError> {
        let violation = |reason: &str| SchedulerError::LifecycleViolation {
            call: id,
            reason: reason.to_string(),
        };
        let channel = self.assign_channel(id)?;
        let rec = self.rec(id)?;
        let spanning = rec.call.form_used == Form::Spanning;
        match step {
            StepKind::Invoke if spanning => return Err(violation("spanning calls are activated, not invoked")),
            StepKind::Activate | StepKind::Reset if !spanning => {
                return Err(violation("atomic calls are invoked"))
            }
            StepKind::Invoke if rec.enqueued => return Err(violation("invoked twice")),
            StepKind::Activate if rec.activate_enqueued => return Err(violation("activated twice")),
            StepKind::Reset if !rec.activate_enqueued => return Err(violation("reset before activate")),
            StepKind::Reset if rec.reset_enqueued => return Err(violation("reset twice")),
            _ => {}
        }
        if rec.status.is_terminal() {
            // a failed or cancelled call never resets
            return Ok(());
        }
        let first = !rec.enqueued;
        let parent = rec.parent;
        let rec = self.rec_mut(id)?;
        match step {
            StepKind::Activate => rec.activate_enqueued = true,
            StepKind::Reset => rec.reset_enqueued = true,
            StepKind::Invoke => {}
        }
        if first {
            rec.enqueued = true;
            rec.channel = channel.clone();
            rec.call.channel = channel;
            rec.status = CallStatus::Queued;
            if let Some(p) = parent {
                self.calls[p.0].incomplete_children += 1;
            }
        }
        self.queue.push(StepRef { call: id, step });
        Ok(())
    }

    fn is_main(&self, rec: &CallRecord) -> bool {
        rec.channel == self.main
    }

    fn eligible(&self, s: StepRef) -> bool {
        let rec = &self.calls[s.call.0];
        if self.busy.contains_key(&rec.channel) {
            return false;
        }
        match s.step {
            StepKind::Reset => rec.activated && rec.incomplete_children == 0,
            StepKind::Activate | StepKind::Invoke => {
                if let Some(p) = rec.parent {
                    let prec = &self.calls[p.0];
                    if !prec.activated && !prec.status.is_terminal() {
                        return false;
                    }
                }
                for i in self.settled..s.call.0 {
                    let other = &self.calls[i];
                    if !other.enqueued || other.status.is_terminal() {
                        continue;
                    }
                    let conflicts = other.channel == rec.channel || self.is_main(other);
                    if conflicts && !self.is_ancestor(CallId(i), s.call) {
                        return false;
                    }
                }
                true
            }
        }
    }

    /// Steps that may start now, in enqueue order.
    pub fn next_dispatchable(&self) -> Vec<StepRef> {
        let mut out: Vec<StepRef> = Vec::new();
        for &s in &self.queue {
            if self.eligible(s) {
                let ch = &self.calls[s.call.0].channel;
                if !out.iter().any(|o| &self.calls[o.call.0].channel == ch) {
                    out.push(s);
                }
            }
        }
        out
    }

    pub fn start(&mut self, s: StepRef) -> Result<(), SchedulerError> {
        let pos = self
            .queue
            .iter()
            .position(|q| *q == s)
            .filter(|_| self.eligible(s))
            .ok_or(SchedulerError::NotDispatchable {
                call: s.call,
                step: s.step,
            })?;
        self.queue.remove(pos);
        let rec = &mut self.calls[s.call.0];
        rec.status = CallStatus::Running;
        self.busy.insert(rec.channel.clone(), s);
        Ok(())
    }

    pub fn complete(&mut self, s: StepRef, outcome: StepOutcome) -> Result<(), SchedulerError> {
        let channel = self.rec(s.call)?.channel.clone();
        if self.busy.get(&channel) != Some(&s) {
            return Err(SchedulerError::LifecycleViolation {
                call: s.call,
                reason: format!("{:?} completed without running", s.step),
            });
        }
        self.busy.remove(&channel);
        let rec = &mut self.calls[s.call.0];
        let finished = match (outcome, s.step) {
            (StepOutcome::Failed, _) => {
                rec.status = CallStatus::Failed;
                true
            }
            (StepOutcome::Ok, StepKind::Activate) => {
                rec.activated = true;
                rec.status = CallStatus::Active;
                false
            }
            (StepOutcome::Ok, _) => {
                rec.status = CallStatus::Done;
                true
            }
        };
        if finished {
            self.finish_call(s.call);
        }
        Ok(())
    }

    fn finish_call(&mut self, id: CallId) {
        self.queue.retain(|q| q.call != id);
        if let Some(p) = self.calls[id.0].parent {
            let prec = &mut self.calls[p.0];
            prec.incomplete_children = prec.incomplete_children.saturating_sub(1);
        }
        while self.settled < self.calls.len() && self.calls[self.settled].status.is_terminal() {
            self.settled += 1;
        }
    }

    /// Cancels everything: queues are drained and every started call is
    /// returned so the caller can report and reset it.
    pub fn interrupt(&mut self) -> Vec<InFlight> {
        let mut in_flight = Vec::new();
        for (i, rec) in self.calls.iter_mut().enumerate() {
            if rec.status.is_terminal() {
                continue;
            }
            let running = self
                .busy
                .values()
                .find(|s| s.call.0 == i)
                .map(|s| s.step);
            let started = running.is_some() || rec.activated;
            if started {
                in_flight.push(InFlight {
                    call: CallId(i),
                    running,
                    needs_reset: rec.activated,
                });
            }
            rec.status = CallStatus::Cancelled;
            rec.incomplete_children = 0;
        }
        self.queue.clear();
        self.busy.clear();
        self.settled = self.calls.len();
        in_flight
    }

    /// True when nothing is queued or running.
    pub fn is_idle(&self) -> bool {
        self.queue.is_empty() && self.busy.is_empty()
    }

    /// Calls that are not finished yet (queued, running or active).
    pub fn unfinished(&self) -> Vec<CallId> {
        self.calls
            .iter()
            .enumerate()
            .filter(|(_, r)| r.enqueued && !r.status.is_terminal())
            .map(|(i, _)| CallId(i))
            .collect()
    }

    pub fn snapshot(&self) -> DispatchState {
        let gate = self
            .calls
            .iter()
            .enumerate()
            .find(|(_, r)| {
                self.is_main(r)
                    && matches!(r.status, CallStatus::Running | CallStatus::Active)
            })
            .map(|(i, _)| Gate::Closed { owner: CallId(i) })
            .unwrap_or(Gate::Open);
        let mut queues: BTreeMap<ChannelId, Vec<StepRef>> = self
            .channels
            .iter()
            .map(|c| (c.id.clone(), Vec::new()))
            .collect();
        for s in &self.queue {
            queues
                .entry(self.calls[s.call.0].channel.clone())
                .or_default()
                .push(*s);
        }
        let pending_children = self
            .calls
            .iter()
            .enumerate()
            .filter(|(_, r)| r.incomplete_children > 0)
            .map(|(i, r)| (CallId(i), r.incomplete_children))
            .collect();
        DispatchState {
            gate,
            queues,
            running: self.busy.values().copied().collect(),
            pending_children,
        }
    }

    /// Admits a wait call on the main channel together with `children`, and
    /// enqueues every step. The wait resets once all children complete.
    pub fn build_wait(
        &mut self,
        registry: &Registry,
        children: Vec<BoundCall>,
    ) -> Result<CallId, SchedulerError> {
        let name = registry.wait_function().ok_or(SchedulerError::NoWaitFunction)?;
        let element = Element::spanning(
            name,
            Vec::new(),
            children.iter().map(|c| c.source_element.clone()).collect(),
        );
        let wait = registry.resolve(&element)?;
        let id = self.admit(wait, None)?;
        let main = self.main.clone();
        self.reassign(id, main)?;
        self.enqueue(id, StepKind::Activate)?;
        for child in children {
            let spanning = child.form_used == Form::Spanning;
            let cid = self.admit(child, Some(id))?;
            if spanning {
                self.enqueue(cid, StepKind::Activate)?;
                self.enqueue(cid, StepKind::Reset)?;
            } else {
                self.enqueue(cid, StepKind::Invoke)?;
            }
        }
        self.enqueue(id, StepKind::Reset)?;
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{FunctionDescriptor, SimulatedAction};

    fn registry() -> Registry {
        let mut r = Registry::new();
        for (name, ch, forms) in [
            ("a", "c1", vec![Form::Atomic]),
            ("b", "c2", vec![Form::Atomic]),
            ("c", "c3", vec![Form::Atomic]),
            ("hold", "c1", vec![Form::Spanning]),
            ("wait", "c2", vec![Form::Spanning]),
            ("ghost", "nowhere", vec![Form::Atomic]),
        ] {
            r.register(FunctionDescriptor::new(name, ch).forms(&forms), SimulatedAction)
                .unwrap();
        }
        r.register(
            FunctionDescriptor::new("say", "c1").param(crate::registry::ParamSpec::required(
                "text",
                crate::registry::ParamType::String,
            )),
            SimulatedAction,
        )
        .unwrap();
        r.set_text_function("say").unwrap();
        r.set_wait_function("wait").unwrap();
        r
    }

    fn sched() -> Scheduler {
        Scheduler::new(&[
            ChannelDecl::main("main"),
            ChannelDecl::sub("c1"),
            ChannelDecl::sub("c2"),
            ChannelDecl::sub("c3"),
        ])
        .unwrap()
    }

    fn atomic(r: &Registry, name: &str) -> BoundCall {
        r.resolve(&Element::self_contained(name, vec![])).unwrap()
    }

    fn spanning(r: &Registry, name: &str) -> BoundCall {
        r.resolve(&Element::spanning(name, vec![], vec![])).unwrap()
    }

    fn run_step(s: &mut Scheduler, step: StepRef) {
        s.start(step).unwrap();
        s.complete(step, StepOutcome::Ok).unwrap();
    }

    fn inv(id: CallId) -> StepRef {
        StepRef {
            call: id,
            step: StepKind::Invoke,
        }
    }

    #[test]
    fn channel_set_validation() {
        assert!(Scheduler::new(&[ChannelDecl::sub("x")]).is_err());
        assert!(Scheduler::new(&[ChannelDecl::main("m"), ChannelDecl::main("n")]).is_err());
        assert!(Scheduler::new(&[ChannelDecl::main("m"), ChannelDecl::sub("m")]).is_err());
    }

    #[test]
    fn text_always_main_and_default_channel() {
        let r = registry();
        let mut s = sched();
        let t = s.admit(r.resolve(&Element::text("hello")).unwrap(), None).unwrap();
        assert_eq!(s.assign_channel(t).unwrap(), ChannelId::from("main"));
        s.reassign(t, "c2".into()).unwrap();
        assert_eq!(s.assign_channel(t).unwrap(), ChannelId::from("main"));
        let a = s.admit(atomic(&r, "a"), None).unwrap();
        assert_eq!(s.assign_channel(a).unwrap(), ChannelId::from("c1"));
        let g = s.admit(atomic(&r, "ghost"), None).unwrap();
        assert!(matches!(s.assign_channel(g), Err(SchedulerError::UnknownChannel(_))));
    }

    #[test]
    fn reassign_rules() {
        let r = registry();
        let mut s = sched();
        let w = s.admit(spanning(&r, "wait"), None).unwrap();
        s.reassign(w, "c2".into()).unwrap();
        s.reassign(w, "main".into()).unwrap();
        assert_eq!(s.assign_channel(w).unwrap(), ChannelId::from("main"));
        s.enqueue(w, StepKind::Activate).unwrap();
        assert_eq!(s.reassign(w, "c1".into()), Err(SchedulerError::AlreadyEnqueued(w)));
    }

    #[test]
    fn lifecycle_violations() {
        let r = registry();
        let mut s = sched();
        let h = s.admit(spanning(&r, "hold"), None).unwrap();
        assert!(matches!(
            s.enqueue(h, StepKind::Reset),
            Err(SchedulerError::LifecycleViolation { .. })
        ));
        s.enqueue(h, StepKind::Activate).unwrap();
        assert!(matches!(
            s.enqueue(h, StepKind::Activate),
            Err(SchedulerError::LifecycleViolation { .. })
        ));
        let a = s.admit(atomic(&r, "a"), None).unwrap();
        assert!(s.enqueue(a, StepKind::Activate).is_err());
    }

    #[test]
    fn same_channel_is_fifo() {
        let r = registry();
        let mut s = sched();
        let ids: Vec<_> = (0..3)
            .map(|_| {
                let id = s.admit(atomic(&r, "a"), None).unwrap();
                s.enqueue(id, StepKind::Invoke).unwrap();
                id
            })
            .collect();
        for id in &ids {
            assert_eq!(s.next_dispatchable(), vec![inv(*id)]);
            run_step(&mut s, inv(*id));
        }
        assert!(s.is_idle());
    }

    #[test]
    fn distinct_channels_run_together() {
        let r = registry();
        let mut s = sched();
        let ids: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|n| {
                let id = s.admit(atomic(&r, n), None).unwrap();
                s.enqueue(id, StepKind::Invoke).unwrap();
                id
            })
            .collect();
        assert_eq!(s.next_dispatchable(), ids.iter().map(|&i| inv(i)).collect::<Vec<_>>());
    }

    #[test]
    fn main_channel_closes_gate() {
        let r = registry();
        let mut s = sched();
        let t = s.admit(r.resolve(&Element::text("hi")).unwrap(), None).unwrap();
        s.enqueue(t, StepKind::Invoke).unwrap();
        let b = s.admit(atomic(&r, "b"), None).unwrap();
        s.enqueue(b, StepKind::Invoke).unwrap();
        assert_eq!(s.next_dispatchable(), vec![inv(t)]);
        s.start(inv(t)).unwrap();
        assert_eq!(s.snapshot().gate, Gate::Closed { owner: t });
        assert!(s.next_dispatchable().is_empty());
        s.complete(inv(t), StepOutcome::Ok).unwrap();
        assert_eq!(s.snapshot().gate, Gate::Open);
        assert_eq!(s.next_dispatchable(), vec![inv(b)]);
    }

    #[test]
    fn gate_does_not_preempt_running_work() {
        let r = registry();
        let mut s = sched();
        let a = s.admit(atomic(&r, "a"), None).unwrap();
        s.enqueue(a, StepKind::Invoke).unwrap();
        s.start(inv(a)).unwrap();
        let t = s.admit(r.resolve(&Element::text("hi")).unwrap(), None).unwrap();
        s.enqueue(t, StepKind::Invoke).unwrap();
        assert_eq!(s.next_dispatchable(), vec![inv(t)]);
        s.start(inv(t)).unwrap();
        // `a` keeps running and may complete under a closed gate
        s.complete(inv(a), StepOutcome::Ok).unwrap();
    }

    #[test]
    fn reset_waits_for_children() {
        let r = registry();
        let mut s = sched();
        let h = s.admit(spanning(&r, "hold"), None).unwrap();
        s.enqueue(h, StepKind::Activate).unwrap();
        let act = StepRef { call: h, step: StepKind::Activate };
        let reset = StepRef { call: h, step: StepKind::Reset };
        let child = s.admit(atomic(&r, "b"), Some(h)).unwrap();
        s.enqueue(child, StepKind::Invoke).unwrap();
        // the child waits for its parent's activation
        assert_eq!(s.next_dispatchable(), vec![act]);
        run_step(&mut s, act);
        s.enqueue(h, StepKind::Reset).unwrap();
        assert_eq!(s.next_dispatchable(), vec![inv(child)]);
        s.start(inv(child)).unwrap();
        assert_eq!(s.snapshot().pending_children.get(&h), Some(&1));
        assert!(s.next_dispatchable().is_empty());
        s.complete(inv(child), StepOutcome::Ok).unwrap();
        assert_eq!(s.next_dispatchable(), vec![reset]);
        run_step(&mut s, reset);
        assert_eq!(s.status(h), Some(CallStatus::Done));
    }

    #[test]
    fn spanning_lends_channel_to_descendants() {
        let r = registry();
        let mut s = sched();
        let h = s.admit(spanning(&r, "hold"), None).unwrap();
        s.enqueue(h, StepKind::Activate).unwrap();
        run_step(&mut s, StepRef { call: h, step: StepKind::Activate });
        let inner = s.admit(atomic(&r, "a"), Some(h)).unwrap();
        s.enqueue(inner, StepKind::Invoke).unwrap();
        s.enqueue(h, StepKind::Reset).unwrap();
        let after = s.admit(atomic(&r, "a"), None).unwrap();
        s.enqueue(after, StepKind::Invoke).unwrap();
        assert_eq!(s.next_dispatchable(), vec![inv(inner)]);
        run_step(&mut s, inv(inner));
        assert_eq!(
            s.next_dispatchable(),
            vec![StepRef { call: h, step: StepKind::Reset }]
        );
        run_step(&mut s, StepRef { call: h, step: StepKind::Reset });
        assert_eq!(s.next_dispatchable(), vec![inv(after)]);
    }

    #[test]
    fn wait_blocks_later_calls() {
        let r = registry();
        let mut s = sched();
        let w = s
            .build_wait(&r, vec![atomic(&r, "a"), atomic(&r, "b")])
            .unwrap();
        assert_eq!(s.channel_of(w), Some(&ChannelId::from("main")));
        let later = s.admit(atomic(&r, "c"), None).unwrap();
        s.enqueue(later, StepKind::Invoke).unwrap();
        run_step(&mut s, StepRef { call: w, step: StepKind::Activate });
        assert_eq!(s.snapshot().gate, Gate::Closed { owner: w });
        let ready = s.next_dispatchable();
        assert_eq!(ready, vec![inv(CallId(1)), inv(CallId(2))]);
        for st in ready {
            run_step(&mut s, st);
        }
        let reset = StepRef { call: w, step: StepKind::Reset };
        assert_eq!(s.next_dispatchable(), vec![reset]);
        run_step(&mut s, reset);
        assert_eq!(s.next_dispatchable(), vec![inv(later)]);
    }

    #[test]
    fn empty_wait_is_zero_length_block() {
        let r = registry();
        let mut s = sched();
        let w = s.build_wait(&r, vec![]).unwrap();
        let act = StepRef { call: w, step: StepKind::Activate };
        run_step(&mut s, act);
        let reset = StepRef { call: w, step: StepKind::Reset };
        assert_eq!(s.next_dispatchable(), vec![reset]);
        run_step(&mut s, reset);
        assert_eq!(s.snapshot().gate, Gate::Open);
        assert!(s.is_idle());
    }

    #[test]
    fn interrupt_drains_everything() {
        let r = registry();
        let mut s = sched();
        let w = s.build_wait(&r, vec![atomic(&r, "a")]).unwrap();
        run_step(&mut s, StepRef { call: w, step: StepKind::Activate });
        s.start(inv(CallId(1))).unwrap();
        let queued = s.admit(atomic(&r, "b"), None).unwrap();
        s.enqueue(queued, StepKind::Invoke).unwrap();
        let flights = s.interrupt();
        assert_eq!(
            flights,
            vec![
                InFlight { call: w, running: None, needs_reset: true },
                InFlight { call: CallId(1), running: Some(StepKind::Invoke), needs_reset: false },
            ]
        );
        let snap = s.snapshot();
        assert_eq!(snap.gate, Gate::Open);
        assert_eq!(snap.queued_len(), 0);
        assert!(snap.running.is_empty());
        assert!(s.is_idle());
        assert_eq!(s.status(queued), Some(CallStatus::Cancelled));
        assert!(s.interrupt().is_empty());
    }

    #[test]
    fn failed_step_unblocks_followers() {
        let r = registry();
        let mut s = sched();
        let h = s.admit(spanning(&r, "hold"), None).unwrap();
        s.enqueue(h, StepKind::Activate).unwrap();
        let child = s.admit(atomic(&r, "b"), Some(h)).unwrap();
        s.enqueue(child, StepKind::Invoke).unwrap();
        let act = StepRef { call: h, step: StepKind::Activate };
        s.start(act).unwrap();
        s.complete(act, StepOutcome::Failed).unwrap();
        assert_eq!(s.next_dispatchable(), vec![inv(child)]);
        // reset of a failed call is dropped
        s.enqueue(h, StepKind::Reset).unwrap();
        run_step(&mut s, inv(child));
        assert!(s.is_idle());
    }

    #[test]
    fn start_rejects_ineligible_step() {
        let r = registry();
        let mut s = sched();
        let a = s.admit(atomic(&r, "a"), None).unwrap();
        let b = s.admit(atomic(&r, "a"), None).unwrap();
        s.enqueue(a, StepKind::Invoke).unwrap();
        s.enqueue(b, StepKind::Invoke).unwrap();
        assert!(matches!(s.start(inv(b)), Err(SchedulerError::NotDispatchable { .. })));
        assert!(s.complete(inv(a), StepOutcome::Ok).is_err());
    }
}
