//! A spanning call stays active until its closing tag has arrived and every
//! nested call has finished. Runs the recorded fixture and prints the trace.

use std::sync::Arc;

use fnstream::executor::{run_program, ScenarioConfig};
use fnstream::registry::RegistryManifest;
use fnstream::source::open_trace;

const DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/patterns/condition");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = RegistryManifest::load(format!("{DIR}/registry.json"))?.into_registry()?;
    let scenario = ScenarioConfig::load(format!("{DIR}/scenario.json"))?;
    let source = open_trace(format!("{DIR}/stream.jsonl"), 1.0)?;

    let outcome = run_program(source, Arc::new(registry), scenario)?;
    for e in &outcome.trace.events {
        println!("{:>5} ms  {:<11} {:<3} on {}", e.t_ms, format!("{:?}", e.kind), e.function, e.channel);
    }
    let parent = outcome.calls.iter().find(|c| c.function == "F1").unwrap();
    println!(
        "F1 closed at {} ms, reset at {} ms once its children were done",
        parent.close_t.unwrap(),
        parent.end.unwrap()
    );
    Ok(())
}
