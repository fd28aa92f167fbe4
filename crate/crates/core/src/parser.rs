//! Incremental function-token parser.
//!
//! [`StreamParser`] is a push parser: text arrives in arbitrary chunks via
//! [`StreamParser::feed`] and every token completed by a chunk is returned
//! immediately. Character data is held until the run ends (markup begins or
//! the stream finishes), so the token sequence never depends on where the
//! chunk boundaries fall.
//!
//! The accepted grammar is the XML subset made of start tags, end tags,
//! empty-element tags, character data and references. Comments, processing
//! instructions, DOCTYPE declarations and CDATA sections are rejected.

use serde::{Deserialize, Serialize};

/// One piece of the incoming text stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamChunk {
    pub seq: u64,
    pub text: String,
}

impl StreamChunk {
    pub fn new(seq: u64, text: impl Into<String>) -> Self {
        Self {
            seq,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    /// Start tag: `<name ...>`.
    AFToken,
    /// End tag: `</name>`.
    RFToken,
    /// Empty-element tag: `<name .../>`.
    SCFToken,
    /// Character data.
    FChar,
    /// Entity or character reference, already decoded.
    FRef,
}

/// Byte offsets into the concatenated stream, end exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionToken {
    pub kind: TokenKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub params: Vec<(String, String)>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub text: String,
    pub span: Span,
}

impl FunctionToken {
    fn tag(kind: TokenKind, name: String, params: Vec<(String, String)>, span: Span) -> Self {
        Self {
            kind,
            name: Some(name),
            params,
            text: String::new(),
            span,
        }
    }

    fn chars(kind: TokenKind, text: String, span: Span) -> Self {
        Self {
            kind,
            name: None,
            params: Vec::new(),
            text,
            span,
        }
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseErrorCode {
    MalformedTag,
    ForbiddenSequence,
    BadReference,
    UnterminatedToken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?} at offset {offset}: {message}")]
pub struct ParseError {
    pub code: ParseErrorCode,
    pub message: String,
    pub offset: usize,
}

impl ParseError {
    fn new(code: ParseErrorCode, offset: usize, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseEvent {
    Token(FunctionToken),
    Error(ParseError),
}

impl ParseEvent {
    pub fn token(&self) -> Option<&FunctionToken> {
        match self {
            ParseEvent::Token(t) => Some(t),
            ParseEvent::Error(_) => None,
        }
    }
}

/// Misuse of the parser API, as opposed to a problem with the stream content.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeedError {
    #[error("parser already finished")]
    Finished,
    #[error("parser stopped after a parse error")]
    Terminated,
    #[error("expected chunk seq {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParserOptions {
    /// Fold decoded references into the surrounding character run instead of
    /// emitting them as separate `FRef` tokens.
    pub merge_references: bool,
}

const MAX_REFERENCE_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RefContext {
    Text,
    AttrValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum State {
    Text,
    Reference { ctx: RefContext },
    TagOpen,
    StartName,
    InTag { need_space: bool },
    AttrName,
    AfterAttrName,
    BeforeValue,
    AttrValue { quote: char },
    SelfClose,
    EndName,
    EndTrail,
    Finished,
    Failed,
}

/// Sequential push parser turning text chunks into [`FunctionToken`]s.
#[derive(Debug, Clone)]
pub struct StreamParser {
    opts: ParserOptions,
    state: State,
    next_seq: u64,
    offset: usize,
    // pending character run
    text: String,
    text_start: usize,
    text_end: usize,
    // consecutive literal `]` at the end of the raw input
    brackets: u8,
    // pending tag
    tag_start: usize,
    name: String,
    attr_name: String,
    attr_value: String,
    params: Vec<(String, String)>,
    // pending reference
    reference: String,
    ref_start: usize,
    pending_quote: char,
}

impl Default for StreamParser {
    fn default() -> Self {
        Self::new()
    }
}

impl StreamParser {
    pub fn new() -> Self {
        Self::with_options(ParserOptions::default())
    }

    pub fn with_options(opts: ParserOptions) -> Self {
        Self {
            opts,
            state: State::Text,
            next_seq: 0,
            offset: 0,
            text: String::new(),
            text_start: 0,
            text_end: 0,
            brackets: 0,
            tag_start: 0,
            name: String::new(),
            attr_name: String::new(),
            attr_value: String::new(),
            params: Vec::new(),
            reference: String::new(),
            ref_start: 0,
            pending_quote: '"',
        }
    }

    pub fn options(&self) -> ParserOptions {
        self.opts
    }

    /// Total bytes consumed so far.
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn is_finished(&self) -> bool {
        self.state == State::Finished
    }

    pub fn is_failed(&self) -> bool {
        self.state == State::Failed
    }

    /// True when no partial token is buffered.
    pub fn at_token_boundary(&self) -> bool {
        matches!(self.state, State::Text) && self.text.is_empty()
    }

    /// Feeds one chunk. Returns every token completed by it, followed by at
    /// most one error event, after which the parser accepts no more input.
    pub fn feed(&mut self, chunk: &StreamChunk) -> Result<Vec<ParseEvent>, FeedError> {
        self.check_usable()?;
        if chunk.seq != self.next_seq {
            return Err(FeedError::OutOfOrder {
                expected: self.next_seq,
                got: chunk.seq,
            });
        }
        self.next_seq += 1;
        Ok(self.push_text(&chunk.text))
    }

    /// Feeds text as the next chunk, assigning the sequence number itself.
    pub fn feed_str(&mut self, text: &str) -> Result<Vec<ParseEvent>, FeedError> {
        let chunk = StreamChunk::new(self.next_seq, text);
        self.feed(&chunk)
    }

    /// Ends the stream, flushing a trailing character run.
    pub fn finish(&mut self) -> Result<Vec<ParseEvent>, FeedError> {
        self.check_usable()?;
        let mut out = Vec::new();
        let err = match self.state {
            State::Text => None,
            State::AttrValue { .. } => Some(ParseError::new(
                ParseErrorCode::MalformedTag,
                self.offset,
                "unterminated attribute value quote",
            )),
            State::Reference { .. } => Some(ParseError::new(
                ParseErrorCode::UnterminatedToken,
                self.offset,
                "stream ended inside a reference",
            )),
            _ => Some(ParseError::new(
                ParseErrorCode::UnterminatedToken,
                self.offset,
                "stream ended inside a tag",
            )),
        };
        match err {
            Some(e) => {
                self.state = State::Failed;
                out.push(ParseEvent::Error(e));
            }
            None => {
                self.flush_text(&mut out);
                self.state = State::Finished;
            }
        }
        Ok(out)
    }

    fn check_usable(&self) -> Result<(), FeedError> {
        match self.state {
            State::Finished => Err(FeedError::Finished),
            State::Failed => Err(FeedError::Terminated),
            _ => Ok(()),
        }
    }

    fn push_text(&mut self, text: &str) -> Vec<ParseEvent> {
        let mut out = Vec::new();
        for c in text.chars() {
            let at = self.offset;
            self.offset += c.len_utf8();
            if let Err(e) = self.step(c, at, &mut out) {
                self.state = State::Failed;
                out.push(ParseEvent::Error(e));
                break;
            }
        }
        out
    }

    fn flush_text(&mut self, out: &mut Vec<ParseEvent>) {
        if self.text.is_empty() {
            return;
        }
        let text = std::mem::take(&mut self.text);
        let span = Span {
            start: self.text_start,
            end: self.text_end,
        };
        out.push(ParseEvent::Token(FunctionToken::chars(
            TokenKind::FChar,
            text,
            span,
        )));
    }

    fn step(&mut self, c: char, at: usize, out: &mut Vec<ParseEvent>) -> Result<(), ParseError> {
        use ParseErrorCode::*;
        match self.state.clone() {
            State::Text => match c {
                '<' => {
                    self.brackets = 0;
                    self.flush_text(out);
                    self.tag_start = at;
                    self.state = State::TagOpen;
                }
                '&' => {
                    self.brackets = 0;
                    if !self.opts.merge_references {
                        self.flush_text(out);
                    } else if self.text.is_empty() {
                        self.text_start = at;
                    }
                    self.ref_start = at;
                    self.reference.clear();
                    self.state = State::Reference {
                        ctx: RefContext::Text,
                    };
                }
                _ => {
                    if c == '>' && self.brackets >= 2 {
                        return Err(ParseError::new(
                            ForbiddenSequence,
                            at - 2,
                            "`]]>` is not allowed in character data",
                        ));
                    }
                    self.brackets = if c == ']' {
                        self.brackets.saturating_add(1)
                    } else {
                        0
                    };
                    if self.text.is_empty() {
                        self.text_start = at;
                    }
                    self.text.push(c);
                    self.text_end = self.offset;
                }
            },
            State::Reference { ctx } => {
                if c == ';' {
                    let decoded = decode_reference_body(&self.reference).map_err(|msg| {
                        ParseError::new(BadReference, self.ref_start, msg)
                    })?;
                    match ctx {
                        RefContext::Text => {
                            if self.opts.merge_references {
                                self.text.push_str(&decoded);
                                self.text_end = self.offset;
                            } else {
                                out.push(ParseEvent::Token(FunctionToken::chars(
                                    TokenKind::FRef,
                                    decoded,
                                    Span {
                                        start: self.ref_start,
                                        end: self.offset,
                                    },
                                )));
                            }
                            self.state = State::Text;
                        }
                        RefContext::AttrValue => {
                            self.attr_value.push_str(&decoded);
                            let quote = self.pending_quote;
                            self.state = State::AttrValue { quote };
                        }
                    }
                } else if self.reference.len() >= MAX_REFERENCE_LEN
                    || !(c == '#' || is_name_char(c))
                {
                    return Err(ParseError::new(
                        BadReference,
                        self.ref_start,
                        format!("malformed reference near {c:?}"),
                    ));
                } else {
                    self.reference.push(c);
                }
            }
            State::TagOpen => match c {
                '/' => {
                    self.name.clear();
                    self.state = State::EndName;
                }
                '!' => {
                    return Err(ParseError::new(
                        ForbiddenSequence,
                        self.tag_start,
                        "comments, CDATA and declarations are not allowed",
                    ))
                }
                '?' => {
                    return Err(ParseError::new(
                        ForbiddenSequence,
                        self.tag_start,
                        "processing instructions are not allowed",
                    ))
                }
                c if is_name_start_char(c) => {
                    self.name.clear();
                    self.name.push(c);
                    self.params.clear();
                    self.state = State::StartName;
                }
                _ => return Err(malformed(at, c, "tag name")),
            },
            State::StartName => match c {
                c if is_name_char(c) => self.name.push(c),
                c if is_xml_space(c) => self.state = State::InTag { need_space: false },
                '/' => self.state = State::SelfClose,
                '>' => self.emit_tag(TokenKind::AFToken, out),
                _ => return Err(malformed(at, c, "tag name")),
            },
            State::InTag { need_space } => match c {
                c if is_xml_space(c) => self.state = State::InTag { need_space: false },
                '/' => self.state = State::SelfClose,
                '>' => self.emit_tag(TokenKind::AFToken, out),
                c if is_name_start_char(c) && !need_space => {
                    self.attr_name.clear();
                    self.attr_name.push(c);
                    self.state = State::AttrName;
                }
                _ => return Err(malformed(at, c, "tag")),
            },
            State::AttrName => match c {
                c if is_name_char(c) => self.attr_name.push(c),
                c if is_xml_space(c) => self.state = State::AfterAttrName,
                '=' => self.state = State::BeforeValue,
                _ => return Err(malformed(at, c, "parameter name")),
            },
            State::AfterAttrName => match c {
                c if is_xml_space(c) => {}
                '=' => self.state = State::BeforeValue,
                _ => return Err(malformed(at, c, "parameter; expected `=`")),
            },
            State::BeforeValue => match c {
                c if is_xml_space(c) => {}
                '"' | '\'' => {
                    self.attr_value.clear();
                    self.state = State::AttrValue { quote: c };
                }
                _ => return Err(malformed(at, c, "parameter value; expected a quote")),
            },
            State::AttrValue { quote } => match c {
                c if c == quote => {
                    if self.params.iter().any(|(n, _)| *n == self.attr_name) {
                        return Err(ParseError::new(
                            MalformedTag,
                            at,
                            format!("duplicate parameter `{}`", self.attr_name),
                        ));
                    }
                    self.params.push((
                        std::mem::take(&mut self.attr_name),
                        std::mem::take(&mut self.attr_value),
                    ));
                    self.state = State::InTag { need_space: true };
                }
                '<' => return Err(malformed(at, c, "parameter value")),
                '&' => {
                    self.pending_quote = quote;
                    self.ref_start = at;
                    self.reference.clear();
                    self.state = State::Reference {
                        ctx: RefContext::AttrValue,
                    };
                }
                _ => self.attr_value.push(c),
            },
            State::SelfClose => match c {
                '>' => self.emit_tag(TokenKind::SCFToken, out),
                _ => return Err(malformed(at, c, "empty-element tag; expected `>`")),
            },
            State::EndName => match c {
                c if self.name.is_empty() && is_name_start_char(c) => self.name.push(c),
                c if !self.name.is_empty() && is_name_char(c) => self.name.push(c),
                c if !self.name.is_empty() && is_xml_space(c) => self.state = State::EndTrail,
                '>' if !self.name.is_empty() => self.emit_tag(TokenKind::RFToken, out),
                _ => return Err(malformed(at, c, "end tag")),
            },
            State::EndTrail => match c {
                c if is_xml_space(c) => {}
                '>' => self.emit_tag(TokenKind::RFToken, out),
                _ => return Err(malformed(at, c, "end tag")),
            },
            State::Finished | State::Failed => unreachable!("guarded by check_usable"),
        }
        Ok(())
    }

    fn emit_tag(&mut self, kind: TokenKind, out: &mut Vec<ParseEvent>) {
        let name = std::mem::take(&mut self.name);
        let params = if kind == TokenKind::RFToken {
            Vec::new()
        } else {
            std::mem::take(&mut self.params)
        };
        let span = Span {
            start: self.tag_start,
            end: self.offset,
        };
        out.push(ParseEvent::Token(FunctionToken::tag(kind, name, params, span)));
        self.state = State::Text;
    }
}

fn malformed(at: usize, c: char, what: &str) -> ParseError {
    ParseError::new(
        ParseErrorCode::MalformedTag,
        at,
        format!("unexpected {c:?} in {what}"),
    )
}

/// Decodes a complete reference such as `&amp;`, `&#65;` or `&#x41;`.
pub fn decode_reference(ref_text: &str) -> Result<String, ParseError> {
    let body = ref_text
        .strip_prefix('&')
        .and_then(|r| r.strip_suffix(';'))
        .ok_or_else(|| {
            ParseError::new(
                ParseErrorCode::BadReference,
                0,
                format!("`{ref_text}` is not of the form `&...;`"),
            )
        })?;
    decode_reference_body(body)
        .map_err(|msg| ParseError::new(ParseErrorCode::BadReference, 0, msg))
}

fn decode_reference_body(body: &str) -> Result<String, String> {
    if let Some(num) = body.strip_prefix('#') {
        let code = if let Some(hex) = num.strip_prefix('x') {
            if hex.is_empty() || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
                return Err(format!("malformed hexadecimal reference `&{body};`"));
            }
            u32::from_str_radix(hex, 16)
        } else {
            if num.is_empty() || !num.chars().all(|c| c.is_ascii_digit()) {
                return Err(format!("malformed decimal reference `&{body};`"));
            }
            num.parse::<u32>()
        }
        .map_err(|_| format!("code point out of range in `&{body};`"))?;
        return match char::from_u32(code) {
            Some(c) if is_xml_char(c) => Ok(c.to_string()),
            _ => Err(format!("code point {code:#x} is not an XML character")),
        };
    }
    let decoded = match body {
        "lt" => "<",
        "gt" => ">",
        "amp" => "&",
        "apos" => "'",
        "quot" => "\"",
        _ => return Err(format!("unknown entity `&{body};`")),
    };
    Ok(decoded.to_string())
}

pub(crate) fn is_xml_char(c: char) -> bool {
    matches!(c,
        '\u{9}' | '\u{A}' | '\u{D}'
        | '\u{20}'..='\u{D7FF}'
        | '\u{E000}'..='\u{FFFD}'
        | '\u{10000}'..='\u{10FFFF}')
}

pub(crate) fn is_xml_space(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r')
}

pub(crate) fn is_name_start_char(c: char) -> bool {
    matches!(c,
        ':' | 'A'..='Z' | '_' | 'a'..='z'
        | '\u{C0}'..='\u{D6}'
        | '\u{D8}'..='\u{F6}'
        | '\u{F8}'..='\u{2FF}'
        | '\u{370}'..='\u{37D}'
        | '\u{37F}'..='\u{1FFF}'
        | '\u{200C}'..='\u{200D}'
        | '\u{2070}'..='\u{218F}'
        | '\u{2C00}'..='\u{2FEF}'
        | '\u{3001}'..='\u{D7FF}'
        | '\u{F900}'..='\u{FDCF}'
        | '\u{FDF0}'..='\u{FFFD}'
        | '\u{10000}'..='\u{EFFFF}')
}

pub(crate) fn is_name_char(c: char) -> bool {
    is_name_start_char(c)
        || matches!(c,
            '-' | '.' | '0'..='9' | '\u{B7}'
            | '\u{300}'..='\u{36F}'
            | '\u{203F}'..='\u{2040}')
}

/// Whether `s` matches the XML `Name` production.
pub fn is_xml_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if is_name_start_char(c) => chars.all(is_name_char),
        _ => false,
    }
}

/// Parses a complete text in one go and returns the events, including the
/// ones produced by `finish`.
pub fn parse_all(text: &str, opts: ParserOptions) -> Vec<ParseEvent> {
    let mut parser = StreamParser::with_options(opts);
    let mut events = parser.feed_str(text).expect("fresh parser");
    if !parser.is_failed() {
        events.extend(parser.finish().expect("parser usable"));
    }
    events
}
