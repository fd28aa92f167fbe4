//! Element forest assembled from function tokens.
//!
//! [`ElementBuilder`] consumes tokens in stream order and maintains the stack
//! of open spanning elements. Every change is reported as an
//! [`ElementEvent`] so downstream stages can act before an element closes.

use serde::{Deserialize, Serialize};

use crate::parser::{FunctionToken, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementForm {
    /// Start tag, children, end tag.
    Spanning,
    SelfContained,
    CharacterRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementState {
    Initial,
    Active,
    Completed,
}

/// Owned element tree. Equality is structural; spans and state are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Element {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub form: ElementForm,
    /// Character content, only for `CharacterRun`.
    pub text: String,
    pub children: Vec<Element>,
    pub state: ElementState,
    pub open_span: Option<crate::parser::Span>,
    pub close_span: Option<crate::parser::Span>,
}

impl PartialEq for Element {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.params == other.params
            && self.form == other.form
            && self.text == other.text
            && self.children == other.children
    }
}

impl Eq for Element {}

impl Element {
    pub fn spanning(name: impl Into<String>, params: Vec<(String, String)>, children: Vec<Element>) -> Self {
        Self {
            name: name.into(),
            params,
            form: ElementForm::Spanning,
            text: String::new(),
            children,
            state: ElementState::Completed,
            open_span: None,
            close_span: None,
        }
    }

    pub fn self_contained(name: impl Into<String>, params: Vec<(String, String)>) -> Self {
        Self {
            name: name.into(),
            params,
            form: ElementForm::SelfContained,
            text: String::new(),
            children: Vec::new(),
            state: ElementState::Completed,
            open_span: None,
            close_span: None,
        }
    }

    pub fn text(text: impl Into<String>) -> Self {
        Self {
            name: String::new(),
            params: Vec::new(),
            form: ElementForm::CharacterRun,
            text: text.into(),
            children: Vec::new(),
            state: ElementState::Completed,
            open_span: None,
            close_span: None,
        }
    }

    pub fn param(&self, name: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ElementId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementEventKind {
    Opened,
    ChildAttached,
    Closed,
    TextArrived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementEvent {
    pub kind: ElementEventKind,
    pub element: ElementId,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ElementError {
    #[error("end tag `</{found}>` at offset {offset} does not match open element `<{expected}>`")]
    NameMismatch {
        expected: String,
        found: String,
        offset: usize,
    },
    #[error("end tag `</{name}>` at offset {offset} has no open element")]
    StrayClose { name: String, offset: usize },
    #[error("nesting deeper than {limit} at offset {offset}")]
    DepthExceeded { limit: usize, offset: usize },
    #[error("stream ended with `<{name}>` still open")]
    Unclosed { name: String },
}

#[derive(Debug, Clone)]
struct Node {
    name: String,
    params: Vec<(String, String)>,
    form: ElementForm,
    text: String,
    parent: Option<ElementId>,
    children: Vec<ElementId>,
    state: ElementState,
    open_span: crate::parser::Span,
    close_span: Option<crate::parser::Span>,
}

pub const DEFAULT_MAX_DEPTH: usize = 64;

/// Arena-backed incremental tree builder.
#[derive(Debug, Clone)]
pub struct ElementBuilder {
    nodes: Vec<Node>,
    roots: Vec<ElementId>,
    open: Vec<ElementId>,
    max_depth: usize,
}

impl Default for ElementBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl ElementBuilder {
    pub fn new() -> Self {
        Self::with_max_depth(DEFAULT_MAX_DEPTH)
    }

    pub fn with_max_depth(max_depth: usize) -> Self {
        Self {
            nodes: Vec::new(),
            roots: Vec::new(),
            open: Vec::new(),
            max_depth,
        }
    }

    pub fn depth(&self) -> usize {
        self.open.len()
    }

    /// Innermost open spanning element.
    pub fn innermost_open(&self) -> Option<ElementId> {
        self.open.last().copied()
    }

    pub fn open_elements(&self) -> &[ElementId] {
        &self.open
    }

    pub fn name(&self, id: ElementId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn params(&self, id: ElementId) -> &[(String, String)] {
        &self.nodes[id.0].params
    }

    pub fn form(&self, id: ElementId) -> ElementForm {
        self.nodes[id.0].form
    }

    pub fn text(&self, id: ElementId) -> &str {
        &self.nodes[id.0].text
    }

    pub fn parent(&self, id: ElementId) -> Option<ElementId> {
        self.nodes[id.0].parent
    }

    pub fn children(&self, id: ElementId) -> &[ElementId] {
        &self.nodes[id.0].children
    }

    pub fn state(&self, id: ElementId) -> ElementState {
        self.nodes[id.0].state
    }

    pub fn roots(&self) -> &[ElementId] {
        &self.roots
    }

    pub fn apply_token(&mut self, token: &FunctionToken) -> Result<Vec<ElementEvent>, ElementError> {
        let offset = token.span.start;
        let mut events = Vec::new();
        match token.kind {
            TokenKind::AFToken => {
                if self.open.len() >= self.max_depth {
                    return Err(ElementError::DepthExceeded {
                        limit: self.max_depth,
                        offset,
                    });
                }
                let id = self.push_node(token, ElementForm::Spanning, ElementState::Active);
                events.push(ElementEvent {
                    kind: ElementEventKind::Opened,
                    element: id,
                    offset,
                });
                self.attach(id, offset, &mut events);
                self.open.push(id);
            }
            TokenKind::SCFToken => {
                let id = self.push_node(token, ElementForm::SelfContained, ElementState::Completed);
                events.push(ElementEvent {
                    kind: ElementEventKind::Opened,
                    element: id,
                    offset,
                });
                self.attach(id, offset, &mut events);
                events.push(ElementEvent {
                    kind: ElementEventKind::Closed,
                    element: id,
                    offset,
                });
            }
            TokenKind::FChar | TokenKind::FRef => {
                let id = self.push_node(token, ElementForm::CharacterRun, ElementState::Completed);
                events.push(ElementEvent {
                    kind: ElementEventKind::TextArrived,
                    element: id,
                    offset,
                });
                self.attach(id, offset, &mut events);
            }
            TokenKind::RFToken => {
                let Some(&top) = self.open.last() else {
                    return Err(ElementError::StrayClose {
                        name: token.name().to_string(),
                        offset,
                    });
                };
                if self.nodes[top.0].name != token.name() {
                    return Err(ElementError::NameMismatch {
                        expected: self.nodes[top.0].name.clone(),
                        found: token.name().to_string(),
                        offset,
                    });
                }
                self.open.pop();
                let node = &mut self.nodes[top.0];
                node.close_span = Some(token.span);
                node.state = ElementState::Completed;
                events.push(ElementEvent {
                    kind: ElementEventKind::Closed,
                    element: top,
                    offset,
                });
            }
        }
        Ok(events)
    }

    /// Reports the first element left open at end of stream.
    pub fn finish(&self) -> Result<(), ElementError> {
        match self.open.first() {
            Some(id) => Err(ElementError::Unclosed {
                name: self.nodes[id.0].name.clone(),
            }),
            None => Ok(()),
        }
    }

    fn push_node(&mut self, token: &FunctionToken, form: ElementForm, state: ElementState) -> ElementId {
        let id = ElementId(self.nodes.len());
        let close_span = (form != ElementForm::Spanning).then_some(token.span);
        self.nodes.push(Node {
            name: token.name.clone().unwrap_or_default(),
            params: token.params.clone(),
            form,
            text: token.text.clone(),
            parent: self.open.last().copied(),
            children: Vec::new(),
            state,
            open_span: token.span,
            close_span,
        });
        id
    }

    fn attach(&mut self, id: ElementId, offset: usize, events: &mut Vec<ElementEvent>) {
        match self.open.last() {
            Some(&parent) => {
                self.nodes[parent.0].children.push(id);
                events.push(ElementEvent {
                    kind: ElementEventKind::ChildAttached,
                    element: id,
                    offset,
                });
            }
            None => self.roots.push(id),
        }
    }

    /// Materializes the subtree rooted at `id`.
    pub fn element(&self, id: ElementId) -> Element {
        let node = &self.nodes[id.0];
        Element {
            name: node.name.clone(),
            params: node.params.clone(),
            form: node.form,
            text: node.text.clone(),
            children: node.children.iter().map(|&c| self.element(c)).collect(),
            state: node.state,
            open_span: Some(node.open_span),
            close_span: node.close_span,
        }
    }

    pub fn forest(&self) -> Vec<Element> {
        self.roots.iter().map(|&r| self.element(r)).collect()
    }
}

/// Builds a forest from a complete token sequence.
pub fn build_forest<'a>(
    tokens: impl IntoIterator<Item = &'a FunctionToken>,
) -> Result<Vec<Element>, ElementError> {
    let mut builder = ElementBuilder::new();
    for t in tokens {
        builder.apply_token(t)?;
    }
    builder.finish()?;
    Ok(builder.forest())
}

/// Writes an element back to schema text. Parameter values are double quoted;
/// `<`, `>`, `&` (and `"` inside values) are written as references.
pub fn serialize(element: &Element) -> String {
    let mut out = String::new();
    write_element(element, &mut out);
    out
}

pub fn serialize_forest(forest: &[Element]) -> String {
    let mut out = String::new();
    for e in forest {
        write_element(e, &mut out);
    }
    out
}

fn write_element(e: &Element, out: &mut String) {
    match e.form {
        ElementForm::CharacterRun => escape_into(&e.text, false, out),
        ElementForm::SelfContained => {
            write_open(e, out);
            out.push_str("/>");
        }
        ElementForm::Spanning => {
            write_open(e, out);
            out.push('>');
            for c in &e.children {
                write_element(c, out);
            }
            out.push_str("</");
            out.push_str(&e.name);
            out.push('>');
        }
    }
}

fn write_open(e: &Element, out: &mut String) {
    out.push('<');
    out.push_str(&e.name);
    for (k, v) in &e.params {
        out.push(' ');
        out.push_str(k);
        out.push_str("=\"");
        escape_into(v, true, out);
        out.push('"');
    }
}

fn escape_into(s: &str, in_attr: bool, out: &mut String) {
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' if in_attr => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}
