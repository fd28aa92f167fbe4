//! Discrete-event driver. Time jumps to the next completion, interrupt or
//! chunk delivery; at equal times completions go first, then interrupts,
//! then chunks. Implementations run synchronously when their step starts.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::engine::Engine;
use super::scenario::ScheduledInterrupt;
use super::{InterruptHandle, RunError};
use crate::scheduler::StepRef;
use crate::source::{ChunkSource, SourceItem};

struct Completion {
    step: StepRef,
    result: Result<String, String>,
}

pub(crate) fn run(
    engine: &mut Engine,
    mut source: ChunkSource,
    mut interrupts: Vec<ScheduledInterrupt>,
    handle: &InterruptHandle,
) {
    interrupts.sort_by_key(|i| i.time_ms);
    let mut next_interrupt = 0;
    // (time, insertion order) -> index into `completions`
    let mut heap: BinaryHeap<Reverse<(u64, u64, usize)>> = BinaryHeap::new();
    let mut completions: Vec<Option<Completion>> = Vec::new();
    let mut lookahead: Option<SourceItem> = None;

    loop {
        if let Some(spec) = handle.take_request() {
            engine.interrupt(&spec);
        }
        if engine.terminated() {
            break;
        }
        for job in engine.dispatch() {
            let result = job.execute();
            let t = engine.now() + job.duration_ms;
            heap.push(Reverse((t, completions.len() as u64, completions.len())));
            completions.push(Some(Completion {
                step: job.step,
                result,
            }));
        }
        if lookahead.is_none() && !engine.input_closed() {
            lookahead = source.next();
            if lookahead.is_none() {
                engine.close_input();
                continue;
            }
        }
        if engine.is_done() {
            break;
        }

        let completion_t = heap.peek().map(|Reverse((t, _, _))| *t);
        let interrupt_t = interrupts.get(next_interrupt).map(|i| i.time_ms.max(engine.now()));
        let chunk_t = lookahead.as_ref().map(|item| match item {
            Ok(c) => c.t_ms.max(engine.now()),
            Err(_) => engine.now(),
        });
        let candidates = [(completion_t, 0u8), (interrupt_t, 1), (chunk_t, 2)];
        let Some((t, class)) = candidates
            .iter()
            .filter_map(|(t, c)| t.map(|t| (t, *c)))
            .min()
        else {
            if engine.stalled() {
                let unfinished = engine.unfinished();
                engine.abort(RunError::Deadlock { unfinished });
            }
            break;
        };
        engine.advance(t);
        match class {
            0 => {
                let Reverse((_, _, idx)) = heap.pop().expect("peeked");
                let c = completions[idx].take().expect("completion consumed once");
                engine.complete(c.step, c.result);
            }
            1 => {
                let spec = interrupts[next_interrupt].spec.clone();
                next_interrupt += 1;
                engine.interrupt(&spec);
            }
            _ => match lookahead.take().expect("chunk candidate") {
                Ok(chunk) => engine.feed(&chunk.text),
                Err(e) => engine.source_failed(e.to_string()),
            },
        }
    }
}
