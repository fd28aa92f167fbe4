//! Wall-clock driver: one worker thread per channel, a source thread that
//! delivers chunks at their offsets, and the engine on the calling thread.
//! Timestamps are milliseconds since the run started.

use std::collections::HashMap;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{Receiver, Sender};

use super::engine::{Engine, Job};
use super::scenario::ScheduledInterrupt;
use super::{InterruptHandle, Msg, RunError};
use crate::scheduler::{ChannelDecl, ChannelId};
use crate::source::ChunkSource;

const CANCEL_POLL: Duration = Duration::from_millis(2);

fn sleep_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now {
        thread::sleep(deadline - now);
    }
}

fn spawn_worker(rx: Receiver<Job>, done: Sender<Msg>) -> JoinHandle<()> {
    thread::spawn(move || {
        for job in rx {
            let began = Instant::now();
            let result = job.execute();
            let deadline = began + Duration::from_millis(job.duration_ms);
            while !job.cancel.is_cancelled() && Instant::now() < deadline {
                thread::sleep(CANCEL_POLL.min(deadline - Instant::now()));
            }
            if job.cancel.is_cancelled() {
                continue;
            }
            if done.send(Msg::Done { step: job.step, result }).is_err() {
                break;
            }
        }
    })
}

pub(crate) fn run(
    engine: &mut Engine,
    channels: &[ChannelDecl],
    source: ChunkSource,
    mut interrupts: Vec<ScheduledInterrupt>,
    handle: &InterruptHandle,
) {
    let start = Instant::now();
    let (tx, rx) = crossbeam_channel::unbounded::<Msg>();
    if let Some(spec) = handle.install(tx.clone()) {
        engine.interrupt(&spec);
    }

    let source_tx = tx.clone();
    thread::spawn(move || {
        for item in source {
            let msg = match item {
                Ok(chunk) => {
                    sleep_until(start + Duration::from_millis(chunk.t_ms));
                    Msg::Chunk(chunk.text)
                }
                Err(e) => Msg::SourceFailed(e.to_string()),
            };
            let failed = matches!(msg, Msg::SourceFailed(_));
            if source_tx.send(msg).is_err() || failed {
                return;
            }
        }
        let _ = source_tx.send(Msg::SourceDone);
    });

    if !interrupts.is_empty() {
        interrupts.sort_by_key(|i| i.time_ms);
        let timer_tx = tx.clone();
        thread::spawn(move || {
            for i in interrupts {
                sleep_until(start + Duration::from_millis(i.time_ms));
                if timer_tx.send(Msg::Interrupt(i.spec)).is_err() {
                    return;
                }
            }
        });
    }

    let mut workers: HashMap<ChannelId, Sender<Job>> = HashMap::new();
    let mut joins = Vec::new();
    for c in channels {
        let (job_tx, job_rx) = crossbeam_channel::unbounded();
        joins.push(spawn_worker(job_rx, tx.clone()));
        workers.insert(c.id.clone(), job_tx);
    }
    drop(tx);

    let elapsed = || start.elapsed().as_millis() as u64;
    loop {
        engine.advance(elapsed());
        for job in engine.dispatch() {
            let worker = &workers[&job.channel];
            worker.send(job).expect("worker outlives the run");
        }
        if engine.is_done() {
            break;
        }
        if engine.stalled() {
            let unfinished = engine.unfinished();
            engine.abort(RunError::Deadlock { unfinished });
            break;
        }
        let Ok(msg) = rx.recv() else { break };
        engine.advance(elapsed());
        match msg {
            Msg::Chunk(text) => engine.feed(&text),
            Msg::SourceDone => engine.close_input(),
            Msg::SourceFailed(message) => engine.source_failed(message),
            Msg::Done { step, result } => engine.complete(step, result),
            Msg::Interrupt(spec) => engine.interrupt(&spec),
        }
    }
    handle.uninstall();
    // wait for cancelled implementations to return
    drop(workers);
    for j in joins {
        let _ = j.join();
    }
}
