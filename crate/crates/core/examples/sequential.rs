//! Three calls on one channel run back to back, in stream order.

use std::sync::Arc;

use fnstream::bcm::{check_pattern, ExpectedInterval, Pattern, PatternSpec};
use fnstream::executor::{run_program, ScenarioConfig};
use fnstream::registry::{Form, FunctionDescriptor, Registry, SimulatedAction};
use fnstream::scheduler::ChannelDecl;
use fnstream::source::immediate;

fn main() {
    let mut registry = Registry::new();
    for (name, ms) in [("F1", 2000), ("F2", 1500), ("F3", 1500)] {
        registry
            .register(
                FunctionDescriptor::new(name, "C1").forms(&[Form::Atomic]).duration_ms(ms),
                SimulatedAction,
            )
            .unwrap();
    }
    registry.set_channels(vec![ChannelDecl::main("main"), ChannelDecl::sub("C1")]);

    let outcome = run_program(
        immediate(["<F1/><F2/><F3/>"]),
        Arc::new(registry),
        ScenarioConfig::default(),
    )
    .expect("valid setup");

    for i in outcome.trace.intervals() {
        println!("{:<3} on {}  [{:>4}, {:>4}] ms", i.function, i.channel, i.start, i.end);
    }

    let spec = PatternSpec {
        pattern: Pattern::Sequential,
        channels: vec!["C1".into()],
        intervals: vec![
            ExpectedInterval::new("F1", "C1", 0, 2000),
            ExpectedInterval::new("F2", "C1", 2000, 3500),
            ExpectedInterval::new("F3", "C1", 3500, 5000),
        ],
        parent: None,
        children: vec![],
        interrupt_ms: None,
        tolerance_ms: 0,
    };
    let report = check_pattern(&outcome.trace, &spec).unwrap();
    println!("correctness {} ({}/{} relations)", report.correctness, report.held, report.relations);
}
