//! Deterministic planner used when no chat model is wanted.
//!
//! All boxes sit side by side on one horizontal band with equal widths
//! `w = min(0.2, (0.9 − (n−1)·0.02)/n)` and 0.02 gaps, centered in the frame;
//! the band is vertically centered with height `max(w, 0.2)`. Each object
//! group then travels 0.25 of the frame along its direction over the clip,
//! centered on its start position and clipped to stay inside the frame.

use serde::{Deserialize, Serialize};

use super::types::{BBox, FramePlan, LayoutPlan, Placement};
use super::PlanError;

pub const BAND_MARGIN: f64 = 0.05;
pub const BAND_GAP: f64 = 0.02;
pub const MAX_BOX_WIDTH: f64 = 0.2;
pub const MIN_BOX_WIDTH: f64 = 0.04;
pub const TRAVEL: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Left,
    Right,
    Up,
    Down,
    None,
}

impl Direction {
    fn unit(self) -> (f64, f64) {
        match self {
            Self::Left => (-1.0, 0.0),
            Self::Right => (1.0, 0.0),
            Self::Up => (0.0, -1.0),
            Self::Down => (0.0, 1.0),
            Self::None => (0.0, 0.0),
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, PlanError> {
        match s.to_ascii_lowercase().as_str() {
            "left" => Ok(Self::Left),
            "right" => Ok(Self::Right),
            "up" => Ok(Self::Up),
            "down" => Ok(Self::Down),
            "none" | "static" => Ok(Self::None),
            other => Err(PlanError::Input(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub count: usize,
    pub direction: Direction,
}

impl ObjectSpec {
    pub fn new(name: impl Into<String>, count: usize, direction: Direction) -> Self {
        Self { name: name.into(), count, direction }
    }
}

impl std::str::FromStr for ObjectSpec {
    type Err = PlanError;

    /// `name[:count[:direction]]`, e.g. `egg:1:left`.
    fn from_str(s: &str) -> Result<Self, PlanError> {
        let mut parts = s.split(':');
        let name = parts.next().unwrap_or_default().trim();
        if name.is_empty() {
            return Err(PlanError::Input(format!("object spec `{s}` has no name")));
        }
        let count = match parts.next() {
            Some(c) => c.trim().parse().map_err(|_| PlanError::Input(format!("bad count in object spec `{s}`")))?,
            None => 1,
        };
        let direction = parts.next().map(str::parse).transpose()?.unwrap_or(Direction::None);
        Ok(Self::new(name, count, direction))
    }
}

pub fn fallback_plan(video_prompt: &str, frame_count: usize, object_specs: &[ObjectSpec]) -> Result<LayoutPlan, PlanError> {
    if frame_count == 0 {
        return Err(PlanError::Input("frame count must be positive".into()));
    }
    if let Some(spec) = object_specs.iter().find(|s| s.count == 0 || s.name.trim().is_empty()) {
        return Err(PlanError::Input(format!("object spec {spec:?} needs a name and a count ≥ 1")));
    }
    let n: usize = object_specs.iter().map(|s| s.count).sum();
    let mut frames: Vec<FramePlan> = (0..frame_count)
        .map(|i| FramePlan { index: i, caption: format!("{} (frame {} of {frame_count})", video_prompt.trim(), i + 1), placements: vec![] })
        .collect();
    if n == 0 {
        return LayoutPlan::new(frames, "No foreground objects requested.");
    }

    let usable = 1.0 - 2.0 * BAND_MARGIN;
    let w = MAX_BOX_WIDTH.min((usable - (n - 1) as f64 * BAND_GAP) / n as f64);
    if w < MIN_BOX_WIDTH {
        return Err(PlanError::Layout(format!(
            "{n} objects need boxes {w:.4} wide on one band; the minimum is {MIN_BOX_WIDTH}"
        )));
    }
    let h = w.max(0.2);
    let band_width = n as f64 * w + (n - 1) as f64 * BAND_GAP;
    let (x_start, y1) = (0.5 - band_width / 2.0, 0.5 - h / 2.0);

    let mut slot = 0;
    for spec in object_specs {
        let group_x1 = x_start + slot as f64 * (w + BAND_GAP);
        let group_x2 = group_x1 + spec.count as f64 * w + (spec.count - 1) as f64 * BAND_GAP;
        let (dx, dy) = spec.direction.unit();
        for (i, frame) in frames.iter_mut().enumerate() {
            let progress = if frame_count == 1 { 0.5 } else { i as f64 / (frame_count - 1) as f64 };
            let along = TRAVEL * (progress - 0.5);
            // keep the whole group inside the frame
            let sx = (dx * along).clamp(-group_x1, 1.0 - group_x2);
            let sy = (dy * along).clamp(-y1, 1.0 - (y1 + h));
            for k in 0..spec.count {
                let x1 = group_x1 + k as f64 * (w + BAND_GAP) + sx;
                let bbox = BBox::new(x1.max(0.0), (y1 + sy).max(0.0), (x1 + w).min(1.0), (y1 + sy + h).min(1.0))?;
                frame.placements.push(Placement::new(spec.name.trim(), bbox));
            }
        }
        slot += spec.count;
    }
    let reasoning = format!(
        "Deterministic band layout: {n} box(es) of width {w:.3} in a row across the middle of the frame, each group moving {TRAVEL} of the frame along its direction."
    );
    LayoutPlan::new(frames, reasoning)
}

/// Best-effort object specs from a prompt such as "two balls rolling right":
/// the noun phrase after the first article or number word, the number as the
/// count, and the first direction word anywhere in the prompt.
pub fn guess_object_specs(video_prompt: &str) -> Vec<ObjectSpec> {
    const NUMBERS: [(&str, usize); 11] = [
        ("a", 1),
        ("an", 1),
        ("the", 1),
        ("one", 1),
        ("two", 2),
        ("three", 3),
        ("four", 4),
        ("five", 5),
        ("six", 6),
        ("seven", 7),
        ("eight", 8),
    ];
    const STOP: [&str; 14] =
        ["in", "on", "at", "to", "from", "with", "into", "onto", "across", "over", "under", "and", "is", "are"];
    let words: Vec<String> = video_prompt
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect();
    let direction = words
        .iter()
        .find_map(|w| match w.as_str() {
            "left" | "leftward" | "leftwards" => Some(Direction::Left),
            "right" | "rightward" | "rightwards" => Some(Direction::Right),
            "up" | "upward" | "upwards" | "rising" => Some(Direction::Up),
            "down" | "downward" | "downwards" | "falling" => Some(Direction::Down),
            _ => None,
        })
        .unwrap_or(Direction::None);
    let Some((pos, count)) = words
        .iter()
        .enumerate()
        .find_map(|(i, w)| NUMBERS.iter().find(|(n, _)| n == w).map(|(_, c)| (i, *c)))
        .or_else(|| words.first().map(|_| (usize::MAX, 1)))
    else {
        return Vec::new();
    };
    let phrase_start = pos.wrapping_add(1);
    let phrase: Vec<&String> = words
        .iter()
        .skip(phrase_start)
        .take_while(|w| !w.ends_with("ing") && !STOP.contains(&w.as_str()))
        .collect();
    match phrase.last() {
        Some(noun) => vec![ObjectSpec::new(noun.as_str(), count, direction)],
        None => Vec::new(),
    }
}
