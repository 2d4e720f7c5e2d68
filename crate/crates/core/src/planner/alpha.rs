//! Choosing the noise inversion ratio with the chat model.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::templates::build_alpha_prompt;
use super::ChatModel;
use crate::error::Result;
use crate::schedule::AlphaRange;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSource {
    /// Given in the run configuration.
    Fixed,
    /// Read from the model's answer; `clamped` when it was outside the range.
    Model { clamped: bool },
    /// The answer held no usable number; the range midpoint was used.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaChoice {
    pub value: f64,
    pub source: AlphaSource,
    /// The model's raw answer, when one was requested.
    pub response: Option<String>,
}

/// The number in a response: an `"alpha"` JSON field if present, otherwise
/// the first numeric literal. A trailing `%` divides by 100.
pub fn parse_alpha_response(text: &str) -> Option<f64> {
    static FIELD: OnceLock<Regex> = OnceLock::new();
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    let field = FIELD.get_or_init(|| Regex::new(r#"(?i)"alpha"\s*:\s*"?([^,}"\s]+)"#).expect("valid regex"));
    let number = NUMBER
        .get_or_init(|| Regex::new(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?(\s*%)?").expect("valid regex"));
    let from_number = |s: &str| -> Option<f64> {
        let caps = number.captures(s)?;
        let literal = caps.get(0)?.as_str().trim_end_matches(|c: char| c == '%' || c.is_whitespace());
        let v: f64 = literal.parse().ok()?;
        Some(if caps.get(1).is_some() { v / 100.0 } else { v })
    };
    let value = match field.captures(text) {
        Some(c) => from_number(&c[1]),
        None => from_number(text),
    }?;
    value.is_finite().then_some(value)
}

/// Resolves a model answer against the range. Never leaves the range.
pub fn resolve_alpha(response: &str, range: AlphaRange) -> AlphaChoice {
    let (value, source) = match parse_alpha_response(response) {
        Some(v) => {
            let clamped = range.clamp(v);
            (clamped, AlphaSource::Model { clamped: clamped != v })
        }
        None => {
            log::warn!("no usable alpha in model response {response:?}; using range midpoint {}", range.midpoint());
            (range.midpoint(), AlphaSource::Fallback)
        }
    };
    AlphaChoice { value, source, response: Some(response.to_string()) }
}

/// Asks the chat model for α and clamps the answer into `backend_range`.
/// Unparseable answers fall back to the range midpoint.
pub fn select_alpha(video_prompt: &str, backend_range: AlphaRange, llm: &dyn ChatModel) -> Result<AlphaChoice> {
    backend_range.validate()?;
    let prompt = build_alpha_prompt(video_prompt, backend_range)?;
    let response = llm.complete(&prompt)?;
    Ok(resolve_alpha(&response, backend_range))
}
