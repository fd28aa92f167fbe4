//! Binds real behaviour to manifest functions and stops a run from another
//! thread. Implementations poll the cancel token while they work.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use fnstream::executor::{ClockMode, InterruptSpec, Program, ScenarioConfig};
use fnstream::registry::{CallContext, RegistryManifest};
use fnstream::scheduler::StepKind;
use fnstream::source::throttled;

fn motor(ctx: &CallContext<'_>) -> Result<String, String> {
    if ctx.step != StepKind::Invoke {
        println!("  {} {:?}", ctx.function, ctx.step);
        return Ok(String::new());
    }
    let args: Vec<String> = ctx.args.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("  {}({}) starting", ctx.function, args.join(", "));
    for _ in 0..20 {
        if ctx.cancel.is_cancelled() {
            println!("  {} stopped early", ctx.function);
            return Err("cancelled".into());
        }
        thread::sleep(Duration::from_millis(25));
    }
    Ok("done".into())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let manifest = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/robot/registry.json");
    let mut registry = RegistryManifest::load(manifest)?.into_registry()?;
    for name in ["wave", "walk", "nod", "look", "sit", "hold"] {
        registry.rebind(name, motor)?;
    }
    registry.rebind("speak", |ctx: &CallContext<'_>| {
        println!("  says {}", ctx.arg("text").map(|v| v.to_string()).unwrap_or_default());
        Ok("spoken".to_string())
    })?;

    let scenario = ScenarioConfig {
        clock_mode: ClockMode::Realtime,
        ..ScenarioConfig::default()
    };
    let program = Program::new(Arc::new(registry), scenario)?;
    let handle = program.interrupt_handle();
    thread::spawn(move || {
        thread::sleep(Duration::from_millis(700));
        println!("-- interrupt --");
        handle.interrupt(InterruptSpec::new("user said stop"));
    });

    let chunks = ["Okay.", "<wave/>", "<walk distance=\"3\"/>", "<nod/>", "<sit/>"];
    let outcome = program.run(throttled(chunks, 100));
    for e in &outcome.trace.events {
        println!("{:>5} ms {:?} {} {}", e.t_ms, e.kind, e.function, e.detail);
    }
    Ok(())
}
