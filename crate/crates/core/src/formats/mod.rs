//! Versioned JSON documents for models, designs and plug-in requests.
//!
//! Matrices are nested row arrays, convex bodies are generator lists and
//! polytopes are normal-row lists. Floats are written with the shortest
//! representation that parses back to the same value.

pub mod serde_matrix;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{DesignReport, NetworkModel, PlugInRequest};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("invalid JSON document")]
    Json(#[from] serde_json::Error),
    #[error("missing schema_version")]
    MissingVersion,
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    UnsupportedVersion { found: u64 },
    #[error("document kind is {found:?}, expected {expected:?}")]
    WrongKind { found: String, expected: &'static str },
    #[error(transparent)]
    Model(#[from] crate::design::ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub kind: String,
    pub model: NetworkModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignFile {
    pub schema_version: u32,
    pub kind: String,
    pub design: DesignReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugInFile {
    pub schema_version: u32,
    pub kind: String,
    pub request: PlugInRequest,
}

const MODEL_KIND: &str = "model";
const DESIGN_KIND: &str = "design";
const PLUGIN_KIND: &str = "plugin";

fn check_header(text: &str, expected: &'static str) -> Result<(), FormatError> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let version = v
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or(FormatError::MissingVersion)?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(FormatError::UnsupportedVersion { found: version });
    }
    let kind = v.get("kind").and_then(serde_json::Value::as_str).unwrap_or("");
    if kind != expected {
        return Err(FormatError::WrongKind {
            found: kind.to_string(),
            expected,
        });
    }
    Ok(())
}

fn parse<T: DeserializeOwned>(text: &str, kind: &'static str) -> Result<T, FormatError> {
    check_header(text, kind)?;
    Ok(serde_json::from_str(text)?)
}

fn render<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize infallibly");
    s.push('\n');
    s
}

pub fn model_to_json(model: &NetworkModel) -> String {
    render(&ModelFile {
        schema_version: SCHEMA_VERSION,
        kind: MODEL_KIND.into(),
        model: model.clone(),
    })
}

pub fn model_from_json(text: &str) -> Result<NetworkModel, FormatError> {
    let f: ModelFile = parse(text, MODEL_KIND)?;
    f.model.validate()?;
    Ok(f.model)
}

pub fn design_to_json(report: &DesignReport) -> String {
    render(&DesignFile {
        schema_version: SCHEMA_VERSION,
        kind: DESIGN_KIND.into(),
        design: report.clone(),
    })
}

pub fn design_from_json(text: &str) -> Result<DesignReport, FormatError> {
    Ok(parse::<DesignFile>(text, DESIGN_KIND)?.design)
}

pub fn plugin_to_json(request: &PlugInRequest) -> String {
    render(&PlugInFile {
        schema_version: SCHEMA_VERSION,
        kind: PLUGIN_KIND.into(),
        request: request.clone(),
    })
}

pub fn plugin_from_json(text: &str) -> Result<PlugInRequest, FormatError> {
    Ok(parse::<PlugInFile>(text, PLUGIN_KIND)?.request)
}
