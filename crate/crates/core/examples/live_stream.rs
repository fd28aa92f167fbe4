//! Streams a reply from an HTTP endpoint and executes it in real time.
//!
//! A tiny server-sent-events endpoint is started on loopback so the example
//! is self-contained; point `LiveConfig` at a real model endpoint instead.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use fnstream::executor::{ClockMode, Program, ScenarioConfig};
use fnstream::registry::RegistryManifest;
use fnstream::source::{open_live, LiveConfig};

const DELTAS: &[&str] = &["Hi! ", "<wave ", "hand=\"left\"/>", "<look dir=\"up\"/>", " Bye."];

fn mock_endpoint() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/stream", listener.local_addr().unwrap());
    thread::spawn(move || {
        let (mut conn, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(conn.try_clone().unwrap());
        let mut length = 0;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                length = v.trim().parse().unwrap();
            }
            if line.trim().is_empty() {
                break;
            }
        }
        std::io::Read::read_exact(&mut reader, &mut vec![0; length]).unwrap();
        conn.write_all(b"HTTP/1.1 200 OK\r\ncontent-type: text/event-stream\r\nconnection: close\r\n\r\n")
            .unwrap();
        for d in DELTAS {
            writeln!(conn, "data: {}\n", serde_json::json!({ "delta": d })).unwrap();
            thread::sleep(Duration::from_millis(150));
        }
        writeln!(conn, "data: [DONE]").unwrap();
    });
    url
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let manifest = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/robot/registry.json");
    let registry = RegistryManifest::load(manifest)?.into_registry()?;
    let scenario = ScenarioConfig {
        clock_mode: ClockMode::Realtime,
        text_rate: 20.0,
        ..ScenarioConfig::default()
    }
    .with_duration("wave", 400)
    .with_duration("look", 200);

    let program = Program::new(Arc::new(registry), scenario)?;
    let events = program.subscribe();
    let printer = thread::spawn(move || {
        for e in events {
            println!("[{:>5} ms] {:?} {} on {}", e.t_ms, e.kind, e.function, e.channel);
        }
    });

    let source = open_live(&LiveConfig::new(mock_endpoint(), r#"{"messages": []}"#))?;
    let outcome = program.run(source);
    printer.join().unwrap();
    match outcome.error {
        Some(e) => println!("run failed: {e}"),
        None => println!("finished in {} ms", outcome.elapsed_ms),
    }
    Ok(())
}
