//! An external event interrupts everything in flight at a given instant.

use std::sync::Arc;

use fnstream::executor::{run_program, EventKind, ScenarioConfig};
use fnstream::registry::RegistryManifest;
use fnstream::source::open_trace;

const DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/patterns/event");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = RegistryManifest::load(format!("{DIR}/registry.json"))?.into_registry()?;
    // same scenario as the fixture, with the interrupt moved earlier
    let scenario = ScenarioConfig {
        interrupts: vec![],
        ..ScenarioConfig::load(format!("{DIR}/scenario.json"))?
    }
    .with_interrupt(3000, "obstacle detected");

    let outcome = run_program(open_trace(format!("{DIR}/stream.jsonl"), 1.0)?, Arc::new(registry), scenario)?;
    for e in &outcome.trace.events {
        println!("{:>5} ms  {:?} {} {}", e.t_ms, e.kind, e.function, e.detail);
    }
    println!("{} call(s) interrupted", outcome.trace.count(EventKind::Interrupted));
    Ok(())
}
