//! Function-interface registry and element-to-call mapping.
//!
//! Interfaces are declared as [`FunctionDescriptor`]s and bound to a
//! [`FunctionImpl`] at registration time. [`Registry::resolve`] turns a parsed
//! element into a [`BoundCall`]: the descriptor plus type-converted arguments,
//! the invocation form and the initial channel.

mod convert;
mod manifest;
mod prompt;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::element::{Element, ElementForm};
use crate::parser::{is_xml_name, Span};
use crate::scheduler::{ChannelDecl, ChannelId, StepKind};

pub use convert::{convert_param, ConversionError, Value};
pub use manifest::{FunctionManifest, ManifestError, ParamManifest, RegistryManifest};

/// Default cap on text gathered into a text parameter.
pub const DEFAULT_TEXT_CAP: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamType {
    String,
    Integer,
    Float,
    Boolean,
    Enum(Vec<String>),
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamType::String => f.write_str("string"),
            ParamType::Integer => f.write_str("integer"),
            ParamType::Float => f.write_str("float"),
            ParamType::Boolean => f.write_str("boolean"),
            ParamType::Enum(values) => {
                let quoted: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
                write!(f, "enum({})", quoted.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub ty: ParamType,
    pub required: bool,
    pub default: Option<Value>,
}

impl ParamSpec {
    pub fn required(name: impl Into<String>, ty: ParamType) -> Self {
        Self {
            name: name.into(),
            ty,
            required: true,
            default: None,
        }
    }

    pub fn optional(name: impl Into<String>, ty: ParamType, default: Value) -> Self {
        Self {
            name: name.into(),
            ty,
            required: false,
            default: Some(default),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    #[serde(alias = "Spanning")]
    Spanning,
    #[serde(alias = "Atomic")]
    Atomic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDescriptor {
    pub name: String,
    pub params: Vec<ParamSpec>,
    pub doc: String,
    pub default_channel: ChannelId,
    pub forms: Vec<Form>,
    /// Nested character data is collected into the first string parameter.
    pub accepts_text_content: bool,
    /// Fallback duration when a scenario does not set one.
    pub simulated_duration_ms: u64,
}

impl FunctionDescriptor {
    pub fn new(name: impl Into<String>, channel: impl Into<ChannelId>) -> Self {
        Self {
            name: name.into(),
            params: Vec::new(),
            doc: String::new(),
            default_channel: channel.into(),
            forms: vec![Form::Atomic],
            accepts_text_content: false,
            simulated_duration_ms: 0,
        }
    }

    pub fn param(mut self, spec: ParamSpec) -> Self {
        self.params.push(spec);
        self
    }

    pub fn doc(mut self, doc: impl Into<String>) -> Self {
        self.doc = doc.into();
        self
    }

    pub fn forms(mut self, forms: &[Form]) -> Self {
        self.forms = forms.to_vec();
        self
    }

    pub fn accepts_text(mut self) -> Self {
        self.accepts_text_content = true;
        self
    }

    pub fn duration_ms(mut self, ms: u64) -> Self {
        self.simulated_duration_ms = ms;
        self
    }

    pub fn supports(&self, form: Form) -> bool {
        self.forms.contains(&form)
    }

    /// Index of the parameter that receives text content.
    pub fn text_param(&self) -> Option<usize> {
        self.params.iter().position(|p| p.ty == ParamType::String)
    }

    fn validate(&self) -> Result<(), RegistryError> {
        let bad = |reason: String| RegistryError::InvalidDescriptor {
            name: self.name.clone(),
            reason,
        };
        if !is_xml_name(&self.name) {
            return Err(bad("name is not an XML Name".into()));
        }
        if self.forms.is_empty() {
            return Err(bad("no invocation form".into()));
        }
        for (i, p) in self.params.iter().enumerate() {
            if !is_xml_name(&p.name) {
                return Err(bad(format!("parameter `{}` is not an XML Name", p.name)));
            }
            if self.params[..i].iter().any(|q| q.name == p.name) {
                return Err(bad(format!("parameter `{}` declared twice", p.name)));
            }
            match (&p.default, p.required) {
                (Some(_), true) => {
                    return Err(bad(format!("required parameter `{}` has a default", p.name)))
                }
                (None, false) => {
                    return Err(bad(format!("optional parameter `{}` has no default", p.name)))
                }
                (Some(v), false) if !v.matches(&p.ty) => {
                    return Err(bad(format!("default of `{}` is not a {}", p.name, p.ty)))
                }
                _ => {}
            }
        }
        if self.accepts_text_content && self.text_param().is_none() {
            return Err(bad("accepts text content but has no string parameter".into()));
        }
        Ok(())
    }
}

/// Cooperative cancellation flag shared between the runtime and a running
/// implementation.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// What an implementation sees when one of its lifecycle steps runs.
#[derive(Debug)]
pub struct CallContext<'a> {
    pub function: &'a str,
    pub step: StepKind,
    pub args: &'a [(String, Value)],
    pub cancel: &'a CancelToken,
}

impl CallContext<'_> {
    pub fn arg(&self, name: &str) -> Option<&Value> {
        self.args.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

/// Concrete behaviour bound to an interface. The returned string becomes the
/// `detail` of the completion event; an `Err` becomes a failure.
pub trait FunctionImpl: Send + Sync {
    fn call(&self, ctx: &CallContext<'_>) -> Result<String, String>;

    /// Whether the implementation tolerates overlapping invocations.
    fn reentrant(&self) -> bool {
        false
    }
}

impl<F> FunctionImpl for F
where
    F: Fn(&CallContext<'_>) -> Result<String, String> + Send + Sync,
{
    fn call(&self, ctx: &CallContext<'_>) -> Result<String, String> {
        self(ctx)
    }
}

/// Stand-in for hardware: acknowledges every step.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulatedAction;

impl FunctionImpl for SimulatedAction {
    fn call(&self, ctx: &CallContext<'_>) -> Result<String, String> {
        Ok(match ctx.step {
            StepKind::Activate => "activated".to_string(),
            StepKind::Invoke => "ok".to_string(),
            StepKind::Reset => "reset".to_string(),
        })
    }

    fn reentrant(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("function `{0}` is already registered")]
    DuplicateName(String),
    #[error("function `{0}` is not registered")]
    UnknownFunction(String),
    #[error("invalid descriptor `{name}`: {reason}")]
    InvalidDescriptor { name: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("unknown function `{name}` at offset {}", span.start)]
    UnknownFunction { name: String, span: Span },
    #[error("`{name}` cannot be used in {form:?} form (offset {})", span.start)]
    FormUnsupported { name: String, form: Form, span: Span },
    #[error("`{name}` is missing required parameter `{param}` (offset {})", span.start)]
    MissingRequiredParam {
        name: String,
        param: String,
        span: Span,
    },
    #[error("`{name}` has no parameter `{param}` (offset {})", span.start)]
    UnknownParam {
        name: String,
        param: String,
        span: Span,
    },
    #[error("{source} (in `{name}` at offset {})", span.start)]
    Conversion {
        name: String,
        span: Span,
        source: ConversionError,
    },
    #[error("no text-output function is designated for character data at offset {}", span.start)]
    NoTextFunction { span: Span },
    #[error("text content for `{name}` exceeds {limit} bytes")]
    TextTooLong { name: String, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapperOptions {
    /// Unknown parameters are errors when set, warnings otherwise.
    pub strict_params: bool,
    pub text_cap: usize,
}

impl Default for MapperOptions {
    fn default() -> Self {
        Self {
            strict_params: true,
            text_cap: DEFAULT_TEXT_CAP,
        }
    }
}

/// A resolved call: `(function, typed arguments)` plus scheduling metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCall {
    pub function: Arc<FunctionDescriptor>,
    /// Aligned with `function.params`.
    pub args: Vec<Value>,
    pub form_used: Form,
    pub channel: ChannelId,
    /// Resolved from character data rather than a tag.
    pub is_text: bool,
    pub source_element: Element,
    pub warnings: Vec<String>,
}

impl BoundCall {
    pub fn name(&self) -> &str {
        &self.function.name
    }

    pub fn named_args(&self) -> Vec<(String, Value)> {
        self.function
            .params
            .iter()
            .zip(&self.args)
            .map(|(p, v)| (p.name.clone(), v.clone()))
            .collect()
    }

    /// Appends text to the descriptor's text parameter.
    pub fn append_text(&mut self, text: &str, cap: usize) -> Result<(), MapError> {
        let idx = self.function.text_param().ok_or_else(|| MapError::TextTooLong {
            name: self.function.name.clone(),
            limit: 0,
        })?;
        if let Value::String(s) = &mut self.args[idx] {
            if s.len() + text.len() > cap {
                return Err(MapError::TextTooLong {
                    name: self.function.name.clone(),
                    limit: cap,
                });
            }
            s.push_str(text);
        }
        Ok(())
    }
}

/// Ordered lifecycle plan of a call and its nested calls.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LifecyclePlan {
    /// Invoke, then complete when the implementation returns.
    Atomic { function: String },
    /// Activate, run every child, then reset once the end tag has been seen
    /// and all children have completed.
    Spanning {
        function: String,
        children: Vec<LifecyclePlan>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LifeState {
    Initial,
    Active,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trigger {
    Activate,
    Call,
    Complete,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    /// Child indices from the plan root.
    pub path: Vec<usize>,
    pub function: String,
    pub from: LifeState,
    pub to: LifeState,
    pub trigger: Trigger,
}

impl LifecyclePlan {
    pub fn function(&self) -> &str {
        match self {
            LifecyclePlan::Atomic { function } | LifecyclePlan::Spanning { function, .. } => {
                function
            }
        }
    }

    /// One sequential ordering of every state transition consistent with
    /// the plan.
    pub fn transitions(&self) -> Vec<Transition> {
        let mut out = Vec::new();
        self.collect(&mut Vec::new(), &mut out);
        out
    }

    fn collect(&self, path: &mut Vec<usize>, out: &mut Vec<Transition>) {
        let t = |function: &str, from, to, trigger, path: &Vec<usize>| Transition {
            path: path.clone(),
            function: function.to_string(),
            from,
            to,
            trigger,
        };
        match self {
            LifecyclePlan::Atomic { function } => {
                out.push(t(function, LifeState::Initial, LifeState::Active, Trigger::Call, path));
                out.push(t(function, LifeState::Active, LifeState::Initial, Trigger::Complete, path));
            }
            LifecyclePlan::Spanning { function, children } => {
                out.push(t(function, LifeState::Initial, LifeState::Active, Trigger::Activate, path));
                for (i, c) in children.iter().enumerate() {
                    path.push(i);
                    c.collect(path, out);
                    path.pop();
                }
                out.push(t(function, LifeState::Active, LifeState::Initial, Trigger::Reset, path));
            }
        }
    }
}

pub(crate) struct Entry {
    pub descriptor: Arc<FunctionDescriptor>,
    pub implementation: Arc<dyn FunctionImpl>,
}

/// Interface registry. Built once, then shared read-only.
pub struct Registry {
    functions: BTreeMap<String, Entry>,
    channels: Vec<ChannelDecl>,
    text_function: Option<String>,
    wait_function: Option<String>,
    options: MapperOptions,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("functions", &self.functions.keys().collect::<Vec<_>>())
            .field("channels", &self.channels)
            .field("text_function", &self.text_function)
            .field("wait_function", &self.wait_function)
            .finish()
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    pub fn new() -> Self {
        Self {
            functions: BTreeMap::new(),
            channels: Vec::new(),
            text_function: None,
            wait_function: None,
            options: MapperOptions::default(),
        }
    }

    pub fn register(
        &mut self,
        descriptor: FunctionDescriptor,
        implementation: impl FunctionImpl + 'static,
    ) -> Result<(), RegistryError> {
        self.register_arc(descriptor, Arc::new(implementation))
    }

    pub fn register_arc(
        &mut self,
        descriptor: FunctionDescriptor,
        implementation: Arc<dyn FunctionImpl>,
    ) -> Result<(), RegistryError> {
        if self.functions.contains_key(&descriptor.name) {
            return Err(RegistryError::DuplicateName(descriptor.name));
        }
        descriptor.validate()?;
        self.functions.insert(
            descriptor.name.clone(),
            Entry {
                descriptor: Arc::new(descriptor),
                implementation,
            },
        );
        Ok(())
    }

    /// Replaces the implementation behind an existing interface.
    pub fn rebind(
        &mut self,
        name: &str,
        implementation: impl FunctionImpl + 'static,
    ) -> Result<(), RegistryError> {
        let entry = self
            .functions
            .get_mut(name)
            .ok_or_else(|| RegistryError::UnknownFunction(name.to_string()))?;
        entry.implementation = Arc::new(implementation);
        Ok(())
    }

    /// Function that character data outside text-accepting elements maps to.
    pub fn set_text_function(&mut self, name: &str) -> Result<(), RegistryError> {
        let d = self.require(name)?;
        if d.text_param().is_none() || !d.supports(Form::Atomic) {
            return Err(RegistryError::InvalidDescriptor {
                name: name.to_string(),
                reason: "text function needs a string parameter and the atomic form".into(),
            });
        }
        self.text_function = Some(name.to_string());
        Ok(())
    }

    /// Spanning function whose calls are moved to the main channel so that
    /// everything after them waits for their nested calls.
    pub fn set_wait_function(&mut self, name: &str) -> Result<(), RegistryError> {
        let d = self.require(name)?;
        if !d.supports(Form::Spanning) {
            return Err(RegistryError::InvalidDescriptor {
                name: name.to_string(),
                reason: "wait function must support the spanning form".into(),
            });
        }
        self.wait_function = Some(name.to_string());
        Ok(())
    }

    pub fn set_channels(&mut self, channels: Vec<ChannelDecl>) {
        self.channels = channels;
    }

    pub fn set_options(&mut self, options: MapperOptions) {
        self.options = options;
    }

    pub fn options(&self) -> MapperOptions {
        self.options
    }

    pub fn channels(&self) -> &[ChannelDecl] {
        &self.channels
    }

    pub fn text_function(&self) -> Option<&str> {
        self.text_function.as_deref()
    }

    pub fn wait_function(&self) -> Option<&str> {
        self.wait_function.as_deref()
    }

    pub fn is_wait(&self, name: &str) -> bool {
        self.wait_function.as_deref() == Some(name)
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn descriptor(&self, name: &str) -> Option<&Arc<FunctionDescriptor>> {
        self.functions.get(name).map(|e| &e.descriptor)
    }

    pub fn implementation(&self, name: &str) -> Option<Arc<dyn FunctionImpl>> {
        self.functions.get(name).map(|e| e.implementation.clone())
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &Arc<FunctionDescriptor>> {
        self.functions.values().map(|e| &e.descriptor)
    }

    pub(crate) fn entries(&self) -> impl Iterator<Item = &Entry> {
        self.functions.values()
    }

    fn require(&self, name: &str) -> Result<&Arc<FunctionDescriptor>, RegistryError> {
        self.descriptor(name)
            .ok_or_else(|| RegistryError::UnknownFunction(name.to_string()))
    }

    /// Prompt block listing every interface, ordered by name.
    pub fn render_prompt(&self) -> String {
        prompt::render(self)
    }

    /// Maps an element to its call. Spanning elements may be resolved as soon
    /// as they open; children play no part in the mapping.
    pub fn resolve(&self, element: &Element) -> Result<BoundCall, MapError> {
        let span = element.open_span.unwrap_or(Span { start: 0, end: 0 });
        if element.form == ElementForm::CharacterRun {
            return self.resolve_text(element, span);
        }
        let descriptor = self
            .descriptor(&element.name)
            .ok_or_else(|| MapError::UnknownFunction {
                name: element.name.clone(),
                span,
            })?
            .clone();
        let form = match element.form {
            ElementForm::Spanning => Form::Spanning,
            _ => Form::Atomic,
        };
        if !descriptor.supports(form) {
            return Err(MapError::FormUnsupported {
                name: element.name.clone(),
                form,
                span,
            });
        }

        let mut warnings = Vec::new();
        for (attr, _) in &element.params {
            if !descriptor.params.iter().any(|p| &p.name == attr) {
                if self.options.strict_params {
                    return Err(MapError::UnknownParam {
                        name: element.name.clone(),
                        param: attr.clone(),
                        span,
                    });
                }
                warnings.push(format!("dropped unknown parameter `{attr}`"));
            }
        }

        let mut args = Vec::with_capacity(descriptor.params.len());
        for spec in &descriptor.params {
            let value = match element.param(&spec.name) {
                Some(raw) => convert_param(raw, spec).map_err(|source| MapError::Conversion {
                    name: element.name.clone(),
                    span,
                    source,
                })?,
                None => match (&spec.default, descriptor.accepts_text_content) {
                    (Some(v), _) => v.clone(),
                    // filled from nested text later
                    (None, true) if Some(args.len()) == descriptor.text_param() => {
                        Value::String(String::new())
                    }
                    (None, _) => {
                        return Err(MapError::MissingRequiredParam {
                            name: element.name.clone(),
                            param: spec.name.clone(),
                            span,
                        })
                    }
                },
            };
            args.push(value);
        }

        Ok(BoundCall {
            channel: descriptor.default_channel.clone(),
            function: descriptor,
            args,
            form_used: form,
            is_text: false,
            source_element: element.clone(),
            warnings,
        })
    }

    fn resolve_text(&self, element: &Element, span: Span) -> Result<BoundCall, MapError> {
        let name = self
            .text_function
            .as_deref()
            .ok_or(MapError::NoTextFunction { span })?;
        let descriptor = self.descriptor(name).expect("validated on designation").clone();
        if element.text.len() > self.options.text_cap {
            return Err(MapError::TextTooLong {
                name: name.to_string(),
                limit: self.options.text_cap,
            });
        }
        let text_idx = descriptor.text_param().expect("validated on designation");
        let mut args = Vec::with_capacity(descriptor.params.len());
        for (i, spec) in descriptor.params.iter().enumerate() {
            if i == text_idx {
                args.push(Value::String(element.text.clone()));
            } else if let Some(v) = &spec.default {
                args.push(v.clone());
            } else {
                return Err(MapError::MissingRequiredParam {
                    name: name.to_string(),
                    param: spec.name.clone(),
                    span,
                });
            }
        }
        Ok(BoundCall {
            channel: descriptor.default_channel.clone(),
            function: descriptor,
            args,
            form_used: Form::Atomic,
            is_text: true,
            source_element: element.clone(),
            warnings: Vec::new(),
        })
    }

    /// Lifecycle plan for a resolved call, following its source element's
    /// children.
    pub fn lifecycle(&self, call: &BoundCall) -> LifecyclePlan {
        self.plan_element(&call.source_element, call.form_used)
    }

    fn plan_element(&self, element: &Element, form: Form) -> LifecyclePlan {
        let function = match element.form {
            ElementForm::CharacterRun => self.text_function.clone().unwrap_or_default(),
            _ => element.name.clone(),
        };
        match form {
            Form::Atomic => LifecyclePlan::Atomic { function },
            Form::Spanning => {
                let accepts_text = self
                    .descriptor(&element.name)
                    .is_some_and(|d| d.accepts_text_content);
                let children = element
                    .children
                    .iter()
                    .filter(|c| !(accepts_text && c.form == ElementForm::CharacterRun))
                    .map(|c| {
                        let f = if c.form == ElementForm::Spanning {
                            Form::Spanning
                        } else {
                            Form::Atomic
                        };
                        self.plan_element(c, f)
                    })
                    .collect();
                LifecyclePlan::Spanning { function, children }
            }
        }
    }
}
