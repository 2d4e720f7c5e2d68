//! Reading layout plans out of free-form model responses.
//!
//! The first balanced JSON block that looks like a plan is used; prose before
//! and after it is ignored, except that trailing prose becomes the reasoning
//! when the JSON carries none. Accepted shapes:
//!
//! * `{"frames": [...], "reasoning": "..."}` or a bare `[...]` of frames;
//! * a frame is `{"index", "caption", "placements"}` (also `frame`,
//!   `description`, `objects`, `boxes`) or a bare list of placements;
//! * a placement is `["name", [x1, y1, x2, y2]]` or `{"name", "box"}` (also
//!   `label`, `object`, `bbox`).
//!
//! Coordinates are fractions of the frame. When the response declares a frame
//! size (`"size": [W, H]`, `"width"`/`"height"`, or prose such as
//! `size: 512x320`), coordinates are read as pixels and divided by it.
//! Values up to [`CLAMP_MARGIN`] outside `[0, 1]` are clamped.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use super::types::{BBox, FramePlan, LayoutPlan, Placement};
use super::PlanError;

pub const CLAMP_MARGIN: f64 = 0.02;

/// Canonical JSON form of a plan; [`parse_layout_plan`] inverts it.
pub fn serialize_plan(plan: &LayoutPlan) -> String {
    serde_json::to_string_pretty(plan).expect("plans serialize")
}

pub fn parse_layout_plan(llm_text: &str, frame_count: usize) -> Result<LayoutPlan, PlanError> {
    let (value, span) = find_plan_block(llm_text)?;
    let size = declared_size(&value).or_else(|| prose_size(&llm_text[..span.0]));
    let entries: &[Value] = match &value {
        Value::Array(items) => items,
        Value::Object(map) => map.get("frames").and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[]),
        _ => &[],
    };
    if entries.is_empty() {
        return Err(PlanError::Frames("plan has no frames".into()));
    }
    if entries.len() > frame_count {
        return Err(PlanError::Frames(format!("plan has {} frames but the video has {frame_count}", entries.len())));
    }

    let mut frames = Vec::with_capacity(entries.len());
    for (k, entry) in entries.iter().enumerate() {
        frames.push(parse_frame(k, entry, size)?);
    }
    frames.sort_by_key(|f| f.index);
    if let Some(w) = frames.windows(2).find(|w| w[0].index == w[1].index) {
        return Err(PlanError::Frames(format!("frame index {} appears twice", w[0].index)));
    }

    let reasoning = match value.get("reasoning").and_then(Value::as_str) {
        Some(r) => r.trim().to_string(),
        None => trailing_reasoning(&llm_text[span.1..]),
    };
    LayoutPlan::new(frames, reasoning)
}

fn parse_frame(k: usize, entry: &Value, size: Option<(f64, f64)>) -> Result<FramePlan, PlanError> {
    let (index, caption, items) = match entry {
        Value::Array(items) => (k, String::new(), items.as_slice()),
        Value::Object(map) => {
            let index = match first_key(map, &["index", "frame"]) {
                None => k,
                Some(v) => v
                    .as_u64()
                    .map(|i| i as usize)
                    .ok_or_else(|| schema(k, 0, "frame index is not a non-negative integer"))?,
            };
            let caption = first_key(map, &["caption", "description", "text"])
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            let items = match first_key(map, &["placements", "objects", "boxes"]) {
                None | Some(Value::Null) => &[][..],
                Some(Value::Array(items)) => items.as_slice(),
                Some(_) => return Err(schema(k, 0, "placements are not a list")),
            };
            (index, caption, items)
        }
        _ => return Err(schema(k, 0, "frame is neither an object nor a list")),
    };
    let placements = items
        .iter()
        .enumerate()
        .map(|(m, item)| parse_placement(k, m, item, size))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FramePlan { index, caption, placements })
}

fn parse_placement(k: usize, m: usize, item: &Value, size: Option<(f64, f64)>) -> Result<Placement, PlanError> {
    let (name, coords) = match item {
        Value::Array(pair) if pair.len() == 2 => (pair[0].as_str(), &pair[1]),
        Value::Object(map) => (
            first_key(map, &["name", "label", "object"]).and_then(Value::as_str),
            first_key(map, &["box", "bbox"]).unwrap_or(&Value::Null),
        ),
        _ => return Err(schema(k, m, "placement is not [name, box] or {name, box}")),
    };
    let name = name.map(str::trim).filter(|n| !n.is_empty()).ok_or_else(|| schema(k, m, "placement has no name"))?;
    let raw: Vec<f64> = coords
        .as_array()
        .filter(|a| a.len() == 4)
        .and_then(|a| a.iter().map(Value::as_f64).collect())
        .ok_or_else(|| schema(k, m, "box is not four numbers"))?;
    let mut c = [raw[0], raw[1], raw[2], raw[3]];
    if let Some((w, h)) = size {
        c = [c[0] / w, c[1] / h, c[2] / w, c[3] / h];
    }
    for v in &mut c {
        if !(-CLAMP_MARGIN..=1.0 + CLAMP_MARGIN).contains(v) {
            return Err(schema(k, m, &format!("coordinate {v} outside [0, 1]")));
        }
        *v = v.clamp(0.0, 1.0);
    }
    if c[0] >= c[2] {
        return Err(schema(k, m, "x1 ≥ x2"));
    }
    if c[1] >= c[3] {
        return Err(schema(k, m, "y1 ≥ y2"));
    }
    let bbox = BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| schema(k, m, &e.to_string()))?;
    Ok(Placement::new(name, bbox))
}

fn schema(frame: usize, object: usize, detail: &str) -> PlanError {
    PlanError::Schema { frame, object, detail: detail.into() }
}

fn first_key<'a>(map: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| map.get(*k))
}

fn looks_like_plan(v: &Value) -> bool {
    match v {
        Value::Object(map) => map.contains_key("frames"),
        Value::Array(items) => {
            !items.is_empty()
                && items.iter().all(|i| match i {
                    Value::Array(_) => true,
                    Value::Object(map) => FRAME_KEYS.iter().any(|k| map.contains_key(*k)),
                    _ => false,
                })
        }
        _ => false,
    }
}

const FRAME_KEYS: [&str; 8] = ["index", "frame", "caption", "description", "text", "placements", "objects", "boxes"];

/// Byte span `(start, end)` of the chosen block and its parsed value.
fn find_plan_block(text: &str) -> Result<(Value, (usize, usize)), PlanError> {
    let mut first_error = None;
    let mut saw_json = false;
    for (start, ch) in text.char_indices() {
        if ch != '{' && ch != '[' {
            continue;
        }
        // Everything after an unclosed bracket is nested inside it, so a
        // plan found there would be a fragment of a cut-off response.
        let Some(end) = balanced_end(text, start) else {
            return Err(PlanError::Parse(format!("JSON block opened at byte {start} is never closed")));
        };
        match serde_json::from_str::<Value>(&text[start..end]) {
            Ok(v) if looks_like_plan(&v) => return Ok((v, (start, end))),
            Ok(_) => saw_json = true,
            Err(e) => {
                first_error.get_or_insert(e.to_string());
            }
        }
    }
    match first_error {
        Some(e) => Err(PlanError::Parse(e)),
        None if saw_json => Err(PlanError::Parse("JSON in the response holds no frames".into())),
        None => Err(PlanError::NoJson),
    }
}

// End (exclusive) of the bracketed region opening at `start`, respecting strings.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in text[start..].char_indices() {
        if in_string {
            match (escaped, ch) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_string = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn declared_size(v: &Value) -> Option<(f64, f64)> {
    let map = v.as_object()?;
    let pair = |w: Option<f64>, h: Option<f64>| match (w, h) {
        (Some(w), Some(h)) if w > 0.0 && h > 0.0 => Some((w, h)),
        _ => None,
    };
    if let Some(size) = first_key(map, &["size", "frame_size"]) {
        return match size {
            Value::Array(a) if a.len() == 2 => pair(a[0].as_f64(), a[1].as_f64()),
            Value::Object(o) => pair(o.get("width").and_then(Value::as_f64), o.get("height").and_then(Value::as_f64)),
            _ => None,
        };
    }
    pair(map.get("width").and_then(Value::as_f64), map.get("height").and_then(Value::as_f64))
}

fn prose_size(prefix: &str) -> Option<(f64, f64)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\bsize\s*[:=]?\s*(\d+)\s*[x×]\s*(\d+)").expect("valid regex"));
    let caps = re.captures(prefix)?;
    let w: f64 = caps[1].parse().ok()?;
    let h: f64 = caps[2].parse().ok()?;
    (w > 0.0 && h > 0.0).then_some((w, h))
}

fn trailing_reasoning(rest: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)^[\s`*#_>-]*reasoning[\s*_]*[:\-]?[\s*_]*").expect("valid regex"));
    let rest = rest.trim().trim_start_matches("```").trim();
    re.replace(rest, "").trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_FRAMES: &str = r#"{"frames": [
        {"index": 0, "caption": "egg on the right", "placements": [["egg", [0.6, 0.4, 0.8, 0.6]], ["cup", [0.1, 0.5, 0.2, 0.7]]]},
        {"index": 1, "caption": "egg rolls left", "placements": [["egg", [0.5, 0.4, 0.7, 0.6]], ["cup", [0.1, 0.5, 0.2, 0.7]]]}
    ], "reasoning": "The egg rolls along the table."}"#;

    #[test]
    fn cut_off_response_is_not_a_plan() {
        let cut = &TWO_FRAMES[..TWO_FRAMES.len() / 2];
        assert!(matches!(parse_layout_plan(cut, 2), Err(PlanError::Parse(_))));
        // a list of placement objects is not a list of frames
        let bare = r#"[{"name": "egg", "box": [0.1, 0.1, 0.2, 0.2]}]"#;
        assert!(matches!(parse_layout_plan(bare, 2), Err(PlanError::Parse(_))));
    }

    #[test]
    fn well_formed_plan() {
        let plan = parse_layout_plan(TWO_FRAMES, 2).unwrap();
        assert_eq!(plan.frames.len(), 2);
        assert_eq!(plan.frames[0].placements[0].name, "egg");
        assert_eq!(plan.frames[0].placements[1].name, "cup");
        assert_eq!(plan.frames[1].placements[0].bbox.x1(), 0.5);
        assert_eq!(plan.objects, ["egg", "cup"]);
        assert_eq!(plan.reasoning, "The egg rolls along the table.");
    }

    #[test]
    fn prose_wrapping_does_not_change_the_parse() {
        let wrapped = format!("Sure! Here is the plan you asked for:\n```json\n{TWO_FRAMES}\n```\nLet me know if you need changes.");
        assert_eq!(parse_layout_plan(&wrapped, 2).unwrap(), parse_layout_plan(TWO_FRAMES, 2).unwrap());
    }

    #[test]
    fn trailing_prose_becomes_reasoning() {
        let text = r#"[[["ball", [0.1, 0.1, 0.2, 0.2]]], [["ball", [0.2, 0.1, 0.3, 0.2]]]]
        **Reasoning:** the ball rolls right."#;
        let plan = parse_layout_plan(text, 4).unwrap();
        assert_eq!(plan.reasoning, "the ball rolls right.");
        assert_eq!(plan.frames[1].index, 1);
    }

    #[test]
    fn object_placements_and_pixel_sizes() {
        let text = r#"{"size": [200, 100], "frames": [{"frame": 3, "description": "d",
            "objects": [{"label": "kite", "bbox": [20, 10, 60, 50]}]}]}"#;
        let plan = parse_layout_plan(text, 8).unwrap();
        let b = plan.frames[0].placements[0].bbox;
        assert_eq!(plan.frames[0].index, 3);
        assert_eq!(b.to_array(), [0.1, 0.1, 0.3, 0.5]);

        let prose = "Frame size: 200x100\n[[[\"kite\", [20, 10, 60, 50]]]]";
        assert_eq!(parse_layout_plan(prose, 8).unwrap().frames[0].placements[0].bbox.to_array(), [0.1, 0.1, 0.3, 0.5]);
    }

    #[test]
    fn malformed_boxes_name_frame_and_object() {
        let text = r#"{"frames": [{"placements": [["a", [0.1, 0.1, 0.2, 0.2]]]},
            {"placements": [["a", [0.1, 0.1, 0.2, 0.2]], ["b", [0.5, 0.5, 0.4, 0.9]]]}]}"#;
        let err = parse_layout_plan(text, 2).unwrap_err();
        assert_eq!(err, PlanError::Schema { frame: 1, object: 1, detail: "x1 ≥ x2".into() });
        assert_eq!(err.to_string(), "x1 ≥ x2 at frame 1, object 1");
    }

    #[test]
    fn clamping_margin() {
        let ok = r#"[[["a", [-0.015, 0.0, 1.019, 0.5]]]]"#;
        assert_eq!(parse_layout_plan(ok, 1).unwrap().frames[0].placements[0].bbox.to_array(), [0.0, 0.0, 1.0, 0.5]);
        let bad = r#"[[["a", [-0.05, 0.0, 0.5, 0.5]]]]"#;
        assert!(matches!(parse_layout_plan(bad, 1), Err(PlanError::Schema { frame: 0, object: 0, .. })));
        // collapses to zero width after clamping
        let flat = r#"[[["a", [1.01, 0.0, 1.015, 0.5]]]]"#;
        assert!(matches!(parse_layout_plan(flat, 1), Err(PlanError::Schema { .. })));
    }

    #[test]
    fn missing_or_broken_json() {
        assert_eq!(parse_layout_plan("I cannot help with that.", 2), Err(PlanError::NoJson));
        assert!(matches!(parse_layout_plan("{\"frames\": [oops]}", 2), Err(PlanError::Parse(_))));
        assert!(matches!(parse_layout_plan("{\"note\": 1}", 2), Err(PlanError::Parse(_))));
        assert!(matches!(parse_layout_plan("{\"frames\": []}", 2), Err(PlanError::Frames(_))));
        let three = r#"[[], [], []]"#;
        assert!(matches!(parse_layout_plan(three, 2), Err(PlanError::Frames(_))));
        let dup = r#"[{"index": 0}, {"index": 0}]"#;
        assert!(matches!(parse_layout_plan(dup, 2), Err(PlanError::Frames(_))));
    }

    #[test]
    fn skips_non_plan_json_before_the_plan() {
        let text = format!("Objects considered: [\"egg\", \"cup\"]. Plan: {TWO_FRAMES}");
        assert_eq!(parse_layout_plan(&text, 2).unwrap().frames.len(), 2);
    }

    #[test]
    fn braces_inside_strings_do_not_confuse_extraction() {
        let text = r#"{"frames": [{"caption": "a } tricky ] caption", "placements": []}], "reasoning": "{"}"#;
        let plan = parse_layout_plan(text, 1).unwrap();
        assert_eq!(plan.frames[0].caption, "a } tricky ] caption");
        assert_eq!(plan.reasoning, "{");
    }
}
