//! Native JSON case format.
//!
//! The document is the serialized [`NetworkModel`]; see the README for the
//! field reference. Optional fields take the defaults documented there.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matpower::parse_matpower_case;
use crate::model::NetworkModel;

pub fn parse_native_case(text: &str) -> Result<NetworkModel> {
    let mut model: NetworkModel = serde_json::from_str(text).map_err(|e| Error::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    model.index_and_validate()?;
    Ok(model)
}

pub fn write_native_case(model: &NetworkModel) -> String {
    serde_json::to_string_pretty(model).expect("model serializes")
}

/// Loads a case, choosing the format by extension (`.json` for native,
/// anything else for MATPOWER).
pub fn load_case(path: &Path) -> Result<NetworkModel> {
    let text = std::fs::read_to_string(path)?;
    let mut model = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        parse_native_case(&text)?
    } else {
        parse_matpower_case(&text)?
    };
    if model.name.is_empty() {
        model.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(model)
}
