mod common;

use fnstream::element::{build_forest, Element, ElementForm};
use fnstream::parser::{parse_all, ParseErrorCode, ParseEvent, ParserOptions, StreamParser};
use fnstream::source::{open_trace, write_trace, TraceRecord};
use rand::rngs::StdRng;
use rand::SeedableRng;

fn feed_all(chunks: &[String], opts: ParserOptions) -> Vec<ParseEvent> {
    let mut p = StreamParser::with_options(opts);
    let mut out = Vec::new();
    for c in chunks {
        if p.is_failed() {
            return out;
        }
        out.extend(p.feed_str(c).unwrap());
    }
    if !p.is_failed() {
        out.extend(p.finish().unwrap());
    }
    out
}

#[test]
fn chunk_invariance_randomized() {
    let mut rng = StdRng::seed_from_u64(0xC0FFEE);
    for case in 0..10_000 {
        let stream = common::gen_stream(&mut rng);
        let chunks = common::partition(&mut rng, &stream);
        for merge in [false, true] {
            let opts = ParserOptions { merge_references: merge };
            let whole = parse_all(&stream, opts);
            assert!(
                whole.iter().all(|e| matches!(e, ParseEvent::Token(_))),
                "case {case}: generator produced an invalid stream {stream:?}: {whole:?}"
            );
            assert_eq!(feed_all(&chunks, opts), whole, "case {case}: {chunks:?}");
        }
    }
}

#[test]
fn chunk_invariance_on_error_streams() {
    let mut rng = StdRng::seed_from_u64(7);
    let broken = ["<a", "<a b='1", "&bogus;", "<!-- c -->", "x]]>y", "<?pi?>", "<a b=1/>", "&#0;", "</"];
    for case in 0..500 {
        let mut stream = common::gen_stream(&mut rng);
        let insert = broken[case % broken.len()];
        let at = stream.char_indices().map(|(i, _)| i).nth(case % (stream.chars().count() + 1)).unwrap_or(stream.len());
        stream.insert_str(at, insert);
        let chunks = common::partition(&mut rng, &stream);
        let whole = parse_all(&stream, ParserOptions::default());
        assert_eq!(feed_all(&chunks, ParserOptions::default()), whole, "{stream:?}");
    }
}

/// Element tree as an XML library sees it: names, attributes, merged text.
#[derive(Debug, PartialEq)]
enum Node {
    El(String, Vec<(String, String)>, Vec<Node>),
    Text(String),
}

fn from_roxml(node: roxmltree::Node) -> Vec<Node> {
    node.children()
        .filter_map(|c| {
            if c.is_element() {
                let attrs = c.attributes().map(|a| (a.name().to_string(), a.value().to_string())).collect();
                Some(Node::El(c.tag_name().name().to_string(), attrs, from_roxml(c)))
            } else if c.is_text() {
                Some(Node::Text(c.text().unwrap().to_string()))
            } else {
                None
            }
        })
        .collect()
}

fn from_forest(forest: &[Element]) -> Vec<Node> {
    forest
        .iter()
        .map(|e| match e.form {
            ElementForm::CharacterRun => Node::Text(e.text.clone()),
            _ => Node::El(e.name.clone(), e.params.clone(), from_forest(&e.children)),
        })
        .collect()
}

#[test]
fn agrees_with_reference_xml_parser() {
    let mut rng = StdRng::seed_from_u64(42);
    for _ in 0..10_000 {
        let stream = common::gen_stream(&mut rng);
        let events = parse_all(&stream, ParserOptions { merge_references: true });
        let tokens: Vec<_> = events.iter().filter_map(ParseEvent::token).collect();
        let forest = build_forest(tokens).expect("well-formed");
        let wrapped = format!("<root>{stream}</root>");
        let doc = roxmltree::Document::parse(&wrapped).expect("reference parser accepts the stream");
        assert_eq!(from_forest(&forest), from_roxml(doc.root_element()), "{stream:?}");
    }
}

#[test]
fn reference_parser_rejects_what_we_reject() {
    for bad in ["<a", "&nope;", "<a></b>", "a]]>b", "<a x='1' x='2'/>", "<1a/>"] {
        let ours = parse_all(bad, ParserOptions::default())
            .iter()
            .any(|e| matches!(e, ParseEvent::Error(_)))
            || build_forest(parse_all(bad, ParserOptions::default()).iter().filter_map(ParseEvent::token)).is_err();
        let theirs = roxmltree::Document::parse(&format!("<root>{bad}</root>")).is_err();
        assert!(ours && theirs, "{bad}: ours={ours} theirs={theirs}");
    }
}

#[test]
fn markup_outside_the_subset_is_rejected() {
    for extra in ["<!-- note -->", "<?pi data?>", "<![CDATA[x]]>"] {
        assert!(roxmltree::Document::parse(&format!("<root>{extra}</root>")).is_ok());
        let events = parse_all(extra, ParserOptions::default());
        assert!(matches!(events.last(), Some(ParseEvent::Error(_))), "{extra}");
    }
}

#[test]
fn replayed_trace_parses_like_the_concatenation() {
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..200 {
        let stream = common::gen_stream(&mut rng);
        let records: Vec<TraceRecord> = common::partition(&mut rng, &stream)
            .into_iter()
            .enumerate()
            .map(|(i, chunk)| TraceRecord { t_ms: i as u64 * 10, chunk })
            .collect();
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write_trace(&records, &mut file).unwrap();
        let chunks: Vec<String> = open_trace(file.path(), 0.0)
            .unwrap()
            .map(|c| c.unwrap().text)
            .collect();
        assert_eq!(chunks.concat(), stream);
        assert_eq!(feed_all(&chunks, ParserOptions::default()), parse_all(&stream, ParserOptions::default()));
    }
}

#[test]
fn stream_cut_mid_tag_is_unterminated() {
    let events = feed_all(&["<move speed=\"1\"/><sm".to_string()], ParserOptions::default());
    match events.last() {
        Some(ParseEvent::Error(e)) => assert_eq!(e.code, ParseErrorCode::UnterminatedToken),
        other => panic!("expected an error, got {other:?}"),
    }
}
