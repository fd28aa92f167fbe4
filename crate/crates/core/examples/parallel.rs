//! Calls on different channels overlap; each starts when its token arrives.

use std::sync::Arc;

use fnstream::executor::{run_program, ScenarioConfig};
use fnstream::registry::{Form, FunctionDescriptor, Registry, SimulatedAction};
use fnstream::scheduler::ChannelDecl;
use fnstream::source::{timed, TimedChunk};

fn main() {
    let mut registry = Registry::new();
    for (name, channel, ms) in [("F1", "C1", 4000), ("F2", "C2", 5000), ("F3", "C3", 3000)] {
        registry
            .register(
                FunctionDescriptor::new(name, channel).forms(&[Form::Atomic]).duration_ms(ms),
                SimulatedAction,
            )
            .unwrap();
    }
    registry.set_channels(vec![
        ChannelDecl::main("main"),
        ChannelDecl::sub("C1"),
        ChannelDecl::sub("C2"),
        ChannelDecl::sub("C3"),
    ]);

    let stream = vec![
        TimedChunk::new(500, "<F2/>"),
        TimedChunk::new(1000, "<F1/>"),
        TimedChunk::new(2000, "<F3/>"),
    ];
    let outcome = run_program(timed(stream), Arc::new(registry), ScenarioConfig::default()).unwrap();

    let scale = 100;
    for i in outcome.trace.intervals() {
        let bar: String = (0..60)
            .map(|t| if (i.start..i.end).contains(&(t * scale)) { '#' } else { '.' })
            .collect();
        println!("{} {}  {bar}", i.channel, i.function);
    }
    println!("all done at {} ms", outcome.elapsed_ms);
}
