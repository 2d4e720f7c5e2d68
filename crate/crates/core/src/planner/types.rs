use serde::{Deserialize, Serialize};

use super::PlanError;

/// Axis-aligned box in normalized frame coordinates, origin top left.
///
/// Serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, PlanError> {
        let coords = [x1, y1, x2, y2];
        if coords.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
            return Err(PlanError::Input(format!("box {coords:?} has coordinates outside [0, 1]")));
        }
        if x1 >= x2 {
            return Err(PlanError::Input(format!("box {coords:?}: x1 ≥ x2")));
        }
        if y1 >= y2 {
            return Err(PlanError::Input(format!("box {coords:?}: y1 ≥ y2")));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn full() -> Self {
        Self { x1: 0.0, y1: 0.0, x2: 1.0, y2: 1.0 }
    }

    /// Coordinate-wise `(1 − s)·self + s·other`.
    pub fn lerp(&self, other: &BBox, s: f64) -> BBox {
        let l = |a: f64, b: f64| a + s * (b - a);
        BBox { x1: l(self.x1, other.x1), y1: l(self.y1, other.y1), x2: l(self.x2, other.x2), y2: l(self.y2, other.y2) }
    }

    /// Compact text form, e.g. `[0.44, 0.57, 0.99, 0.99]`.
    pub fn to_compact(&self) -> String {
        let parts: Vec<String> = self.to_array().iter().map(|v| fmt_coord(*v)).collect();
        format!("[{}]", parts.join(", "))
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = PlanError;

    fn try_from(v: [f64; 4]) -> Result<Self, PlanError> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

// shortest repr that round-trips, with at least one decimal
fn fmt_coord(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default = "one")]
    pub confidence: f64,
}

fn one() -> f64 {
    1.0
}

impl DetectedObject {
    pub fn new(label: impl Into<String>, bbox: BBox, confidence: f64) -> Result<Self, PlanError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(PlanError::Input("detected object with an empty label".into()));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(PlanError::Input(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self { label, bbox, confidence })
    }

    /// `{"label": "path", "box": [0.44, 0.57, 0.99, 0.99]}`
    pub fn to_prompt_json(&self) -> String {
        format!(
            "{{\"label\": {}, \"box\": {}}}",
            serde_json::to_string(&self.label).expect("strings serialize"),
            self.bbox.to_compact()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub name: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

impl Placement {
    pub fn new(name: impl Into<String>, bbox: BBox) -> Self {
        Self { name: name.into(), bbox }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub index: usize,
    #[serde(default)]
    pub caption: String,
    #[serde(default)]
    pub placements: Vec<Placement>,
}

/// Per-frame object placements with the planner's reasoning.
///
/// `objects` lists every placement name once, in order of first appearance;
/// [`LayoutPlan::new`] derives it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutPlan {
    pub frames: Vec<FramePlan>,
    #[serde(default)]
    pub reasoning: String,
    pub objects: Vec<String>,
}

impl LayoutPlan {
    pub fn new(frames: Vec<FramePlan>, reasoning: impl Into<String>) -> Result<Self, PlanError> {
        if frames.is_empty() {
            return Err(PlanError::Frames("a plan needs at least one frame".into()));
        }
        let mut objects: Vec<String> = Vec::new();
        for p in frames.iter().flat_map(|f| &f.placements) {
            if !objects.contains(&p.name) {
                objects.push(p.name.clone());
            }
        }
        Ok(Self { frames, reasoning: reasoning.into(), objects })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Frames with no placements at all, as used for a background-only sketch.
    pub fn empty(frame_count: usize) -> Result<Self, PlanError> {
        let frames = (0..frame_count).map(|index| FramePlan { index, caption: String::new(), placements: vec![] }).collect();
        Self::new(frames, "")
    }
}

/// `plan.json` on disk: the plan plus the α chosen for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub frames: Vec<FramePlan>,
    pub reasoning: String,
    pub alpha: Option<f64>,
}

impl PlanFile {
    pub fn new(plan: &LayoutPlan, alpha: Option<f64>) -> Self {
        Self { frames: plan.frames.clone(), reasoning: plan.reasoning.clone(), alpha }
    }

    pub fn into_plan(self) -> Result<LayoutPlan, PlanError> {
        LayoutPlan::new(self.frames, self.reasoning)
    }
}

/// The three rendered planner prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub background_prompt: String,
    pub plan_prompt: String,
    pub alpha_prompt: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_invariants() {
        assert!(BBox::new(0.1, 0.1, 0.2, 0.2).is_ok());
        assert!(BBox::new(0.3, 0.1, 0.2, 0.2).is_err());
        assert!(BBox::new(0.1, 0.1, 0.2, 0.1).is_err());
        assert!(BBox::new(-0.1, 0.1, 0.2, 0.2).is_err());
        assert!(BBox::new(0.1, 0.1, f64::NAN, 0.2).is_err());
        assert!(serde_json::from_str::<BBox>("[0.5, 0.5, 0.4, 0.9]").is_err());
    }

    #[test]
    fn detected_object_prompt_form() {
        let d = DetectedObject::new("path", BBox::new(0.44, 0.57, 0.99, 0.99).unwrap(), 0.9).unwrap();
        assert_eq!(d.to_prompt_json(), r#"{"label": "path", "box": [0.44, 0.57, 0.99, 0.99]}"#);
        let whole = DetectedObject::new("sky", BBox::full(), 1.0).unwrap();
        assert_eq!(whole.to_prompt_json(), r#"{"label": "sky", "box": [0.0, 0.0, 1.0, 1.0]}"#);
        assert!(DetectedObject::new(" ", BBox::full(), 1.0).is_err());
    }

    #[test]
    fn objects_are_deduplicated_in_order() {
        let b = BBox::new(0.1, 0.1, 0.3, 0.3).unwrap();
        let frames = vec![
            FramePlan { index: 0, caption: "".into(), placements: vec![Placement::new("dog", b), Placement::new("cat", b)] },
            FramePlan { index: 1, caption: "".into(), placements: vec![Placement::new("cat", b), Placement::new("ball", b)] },
        ];
        assert_eq!(LayoutPlan::new(frames, "").unwrap().objects, ["dog", "cat", "ball"]);
        assert!(LayoutPlan::new(vec![], "").is_err());
    }
}
