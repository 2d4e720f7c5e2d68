//! Prompt templates and their rendering.
//!
//! Templates are text assets under `templates/`, compiled into the crate.
//! Placeholders look like `{{name}}` and are substituted in a single pass, so
//! placeholder-like text inside a user prompt is never expanded. The video
//! prompt is inserted as a JSON string literal, which escapes quotes, braces
//! and control characters and can be decoded back verbatim.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::types::{DetectedObject, PromptBundle};
use super::PlanError;
use crate::schedule::AlphaRange;

pub const BACKGROUND_TEMPLATE: &str = include_str!("../../templates/background.txt");
pub const PLAN_TEMPLATE: &str = include_str!("../../templates/plan.txt");
pub const ALPHA_TEMPLATE: &str = include_str!("../../templates/alpha.txt");

/// First line of each template; the mock chat service dispatches on it.
pub const BACKGROUND_TASK: &str = "Task: background description";
pub const PLAN_TASK: &str = "Task: layout plan";
pub const ALPHA_TASK: &str = "Task: noise inversion ratio";

pub const NO_DETECTED_OBJECTS: &str = "(no detected objects)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateId {
    pub name: String,
    pub version: String,
    /// First 16 hex digits of the template text's SHA-256.
    pub digest: String,
}

fn template_id(text: &str) -> TemplateId {
    let header = text
        .lines()
        .find_map(|l| l.strip_prefix("Template: "))
        .expect("every bundled template declares its id");
    let (name, version) = header.split_once('/').expect("template id has the form name/version");
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    TemplateId { name: name.into(), version: version.into(), digest: digest[..16].into() }
}

pub fn template_ids() -> Vec<TemplateId> {
    [BACKGROUND_TEMPLATE, PLAN_TEMPLATE, ALPHA_TEMPLATE].map(template_id).to_vec()
}

/// Replaces `{{key}}` markers in one left-to-right pass. Unknown markers are
/// left as they are.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}").and_then(|end| vars.iter().find(|(k, _)| *k == &after[..end]).map(|(_, v)| (end, v))) {
            Some((end, value)) => {
                out.push_str(value);
                rest = &after[end + 2..];
            }
            None => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn prompt_literal(video_prompt: &str) -> Result<String, PlanError> {
    if video_prompt.trim().is_empty() {
        return Err(PlanError::Input("video prompt is empty".into()));
    }
    Ok(serde_json::to_string(video_prompt).expect("strings serialize"))
}

pub fn build_background_prompt(video_prompt: &str) -> Result<String, PlanError> {
    Ok(render(BACKGROUND_TEMPLATE, &[("prompt", &prompt_literal(video_prompt)?)]))
}

pub fn build_plan_prompt(
    video_prompt: &str,
    background_boxes: &[DetectedObject],
    frame_count: usize,
) -> Result<String, PlanError> {
    if frame_count < 2 {
        return Err(PlanError::Input(format!("a plan needs at least 2 frames, got {frame_count}")));
    }
    let boxes = if background_boxes.is_empty() {
        NO_DETECTED_OBJECTS.to_string()
    } else {
        background_boxes.iter().map(DetectedObject::to_prompt_json).collect::<Vec<_>>().join("\n")
    };
    Ok(render(
        PLAN_TEMPLATE,
        &[("prompt", &prompt_literal(video_prompt)?), ("frame_count", &frame_count.to_string()), ("boxes", &boxes)],
    ))
}

pub fn build_alpha_prompt(video_prompt: &str, range: AlphaRange) -> Result<String, PlanError> {
    Ok(render(
        ALPHA_TEMPLATE,
        &[
            ("prompt", &prompt_literal(video_prompt)?),
            ("alpha_lo", &range.lo.to_string()),
            ("alpha_hi", &range.hi.to_string()),
        ],
    ))
}

pub fn build_prompt_bundle(
    video_prompt: &str,
    background_boxes: &[DetectedObject],
    frame_count: usize,
    range: AlphaRange,
) -> Result<PromptBundle, PlanError> {
    Ok(PromptBundle {
        background_prompt: build_background_prompt(video_prompt)?,
        plan_prompt: build_plan_prompt(video_prompt, background_boxes, frame_count)?,
        alpha_prompt: build_alpha_prompt(video_prompt, range)?,
    })
}

/// Recovers the video prompt from any rendered template.
pub fn extract_video_prompt(rendered: &str) -> Option<String> {
    let line = rendered.lines().find_map(|l| l.strip_prefix("Video prompt (JSON string): "))?;
    serde_json::from_str(line).ok()
}

/// Recovers the frame count from a rendered plan prompt.
pub fn extract_frame_count(rendered: &str) -> Option<usize> {
    rendered.lines().find_map(|l| l.strip_prefix("Number of frames: ")).and_then(|v| v.trim().parse().ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::BBox;

    #[test]
    fn background_prompt_keeps_prompt_and_constraint() {
        let p = "A cat sinking to the left in the living room";
        let out = build_background_prompt(p).unwrap();
        assert!(out.starts_with(BACKGROUND_TASK));
        assert!(out.contains(p));
        assert!(out.contains("Leave out every foreground or moving object"));
        assert!(out.contains("static camera"));
        assert_eq!(extract_video_prompt(&out).as_deref(), Some(p));
        assert!(build_background_prompt("  ").is_err());
    }

    #[test]
    fn hostile_prompts_round_trip() {
        for p in [r#"a "quoted" {{boxes}} prompt"#, "braces { } and \\ backslash", "new\nline\tand émoji 🥚", "}}{{"] {
            for rendered in [
                build_background_prompt(p).unwrap(),
                build_plan_prompt(p, &[], 4).unwrap(),
                build_alpha_prompt(p, AlphaRange::COGVIDEOX).unwrap(),
            ] {
                assert_eq!(extract_video_prompt(&rendered).as_deref(), Some(p));
            }
        }
        // the {{boxes}} inside the prompt was not expanded
        let rendered = build_plan_prompt(r#"x {{boxes}}"#, &[], 4).unwrap();
        assert!(rendered.contains(r#""x {{boxes}}""#));
    }

    #[test]
    fn plan_prompt_contents() {
        let path = DetectedObject::new("path", BBox::new(0.44, 0.57, 0.99, 0.99).unwrap(), 0.8).unwrap();
        let out = build_plan_prompt("a dog on a path", &[path], 16).unwrap();
        assert!(out.contains(r#"{"label": "path", "box": [0.44, 0.57, 0.99, 0.99]}"#));
        assert!(out.contains("Number of frames: 16"));
        assert_eq!(extract_frame_count(&out), Some(16));
        let empty = build_plan_prompt("a dog", &[], 2).unwrap();
        assert!(empty.contains(NO_DETECTED_OBJECTS));
        assert!(build_plan_prompt("a dog", &[], 1).is_err());
    }

    #[test]
    fn alpha_prompt_states_range() {
        let out = build_alpha_prompt("a ball bouncing", AlphaRange::VIDEOCRAFTER2).unwrap();
        assert!(out.starts_with(ALPHA_TASK));
        assert!(out.contains("[0.5, 0.8]"));
    }

    #[test]
    fn template_ids_are_stable_and_distinct() {
        let ids = template_ids();
        assert_eq!(ids.iter().map(|i| i.name.as_str()).collect::<Vec<_>>(), ["background", "plan", "alpha"]);
        assert!(ids.iter().all(|i| i.version == "v1" && i.digest.len() == 16));
        assert_eq!(ids, template_ids());
    }

    #[test]
    fn render_leaves_unknown_markers() {
        assert_eq!(render("{{a}} {{b}} {{", &[("a", "1")]), "1 {{b}} {{");
    }
}
