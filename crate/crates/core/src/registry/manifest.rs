//! JSON registry manifest.
//!
//! ```json
//! {
//!   "channels": [{"id": "main", "kind": "main"}, {"id": "body", "kind": "sub"}],
//!   "text_function": "speak",
//!   "wait_function": "wait",
//!   "functions": [{
//!     "name": "move",
//!     "params": [{"name": "speed", "type": "float", "required": false, "default": 1.0}],
//!     "doc": "Move forward.",
//!     "default_channel": "body",
//!     "forms": ["atomic", "spanning"],
//!     "accepts_text_content": false,
//!     "simulated_duration_ms": 2000
//!   }]
//! }
//! ```
//!
//! Every function is bound to [`SimulatedAction`]; use [`Registry::rebind`]
//! to attach real behaviour.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    convert_param, Form, FunctionDescriptor, ParamSpec, ParamType, Registry, RegistryError,
    SimulatedAction, Value,
};
use crate::scheduler::ChannelDecl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryManifest {
    #[serde(default)]
    pub channels: Vec<ChannelDecl>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_function: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wait_function: Option<String>,
    pub functions: Vec<FunctionManifest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionManifest {
    pub name: String,
    #[serde(default)]
    pub params: Vec<ParamManifest>,
    #[serde(default)]
    pub doc: String,
    pub default_channel: String,
    pub forms: Vec<Form>,
    #[serde(default)]
    pub accepts_text_content: bool,
    #[serde(default)]
    pub simulated_duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamManifest {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: TypeManifest,
    #[serde(default = "yes")]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<serde_json::Value>,
}

fn yes() -> bool {
    true
}

/// `"float"` or `{"enum": ["a", "b"]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TypeManifest {
    Named(String),
    Enum {
        #[serde(rename = "enum")]
        values: Vec<String>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("function `{function}`: {reason}")]
    Invalid { function: String, reason: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

impl RegistryManifest {
    pub fn from_json(text: &str) -> Result<Self, ManifestError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn into_registry(self) -> Result<Registry, ManifestError> {
        let mut registry = Registry::new();
        for f in self.functions {
            let descriptor = f.into_descriptor()?;
            registry.register(descriptor, SimulatedAction)?;
        }
        if let Some(name) = &self.text_function {
            registry.set_text_function(name)?;
        }
        if let Some(name) = &self.wait_function {
            registry.set_wait_function(name)?;
        }
        registry.set_channels(self.channels);
        Ok(registry)
    }
}

impl FunctionManifest {
    fn into_descriptor(self) -> Result<FunctionDescriptor, ManifestError> {
        let invalid = |reason: String| ManifestError::Invalid {
            function: self.name.clone(),
            reason,
        };
        let mut params = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let ty = match &p.ty {
                TypeManifest::Named(n) => match n.as_str() {
                    "string" => ParamType::String,
                    "integer" => ParamType::Integer,
                    "float" => ParamType::Float,
                    "boolean" => ParamType::Boolean,
                    other => return Err(invalid(format!("unknown type `{other}`"))),
                },
                TypeManifest::Enum { values } => ParamType::Enum(values.clone()),
            };
            let spec = ParamSpec::required(p.name.clone(), ty);
            let default = match &p.default {
                None | Some(serde_json::Value::Null) => None,
                Some(v) => Some(json_default(v, &spec).map_err(invalid)?),
            };
            params.push(ParamSpec {
                required: p.required,
                default,
                ..spec
            });
        }
        Ok(FunctionDescriptor {
            name: self.name.clone(),
            params,
            doc: self.doc.clone(),
            default_channel: self.default_channel.clone().into(),
            forms: self.forms.clone(),
            accepts_text_content: self.accepts_text_content,
            simulated_duration_ms: self.simulated_duration_ms,
        })
    }
}

fn json_default(v: &serde_json::Value, spec: &ParamSpec) -> Result<Value, String> {
    use serde_json::Value as J;
    let value = match (v, &spec.ty) {
        (J::String(s), _) => convert_param(s, spec).map_err(|e| e.to_string())?,
        (J::Bool(b), ParamType::Boolean) => Value::Boolean(*b),
        (J::Number(n), ParamType::Integer) => {
            Value::Integer(n.as_i64().ok_or("default is not an integer")?)
        }
        (J::Number(n), ParamType::Float) => Value::Float(n.as_f64().ok_or("bad float default")?),
        _ => return Err(format!("default for `{}` is not a {}", spec.name, spec.ty)),
    };
    Ok(value)
}
