//! Feeds a model reply to the push parser a few characters at a time and
//! prints tokens and element events the moment they become available.
//!
//! ```bash
//! cargo run --example parse_stream
//! ```

use fnstream::element::{ElementBuilder, ElementEventKind};
use fnstream::parser::{ParseEvent, ParserOptions, StreamParser};
use fnstream::source::split_chars;

const REPLY: &str = "Sure &amp; happy to! <hold arm=\"left\"><walk distance='2.5'/>Walking now</hold><nod/>";

fn main() {
    let mut parser = StreamParser::with_options(ParserOptions { merge_references: true });
    let mut builder = ElementBuilder::new();

    for (i, chunk) in split_chars(REPLY, 7).iter().enumerate() {
        println!("chunk {i:>2}: {chunk:?}");
        for event in parser.feed_str(chunk).expect("parser accepts input") {
            handle(&mut builder, event);
        }
    }
    for event in parser.finish().expect("parser accepts finish") {
        handle(&mut builder, event);
    }
    builder.finish().expect("every element closed");

    println!("\nforest:");
    for element in builder.forest() {
        println!("  {}", fnstream::element::serialize(&element));
    }
}

fn handle(builder: &mut ElementBuilder, event: ParseEvent) {
    let token = match event {
        ParseEvent::Token(t) => t,
        ParseEvent::Error(e) => {
            eprintln!("parse error: {e}");
            std::process::exit(1);
        }
    };
    println!("    token {:?} {:?}", token.kind, token.text);
    for ev in builder.apply_token(&token).expect("well-formed") {
        let what = match ev.kind {
            ElementEventKind::Opened => "opened",
            ElementEventKind::ChildAttached => "child attached to",
            ElementEventKind::Closed => "closed",
            ElementEventKind::TextArrived => "text in",
        };
        let name = builder.name(ev.element);
        println!("      {what} {}", if name.is_empty() { "<text>" } else { name });
    }
}
