//! The planning protocol: prompts for the chat model, parsing and checking
//! its layout plans, choosing α, and a deterministic stand-in planner.

mod alpha;
mod error;
mod fallback;
mod parse;
pub mod templates;
mod types;
mod validate;

pub use alpha::{parse_alpha_response, resolve_alpha, select_alpha, AlphaChoice, AlphaSource};
pub use error::PlanError;
pub use fallback::{fallback_plan, guess_object_specs, Direction, ObjectSpec};
pub use parse::{parse_layout_plan, serialize_plan, CLAMP_MARGIN};
pub use templates::{build_alpha_prompt, build_background_prompt, build_plan_prompt, build_prompt_bundle, TemplateId};
pub use types::{BBox, DetectedObject, FramePlan, LayoutPlan, PlanFile, Placement, PromptBundle};
pub use validate::{interpolate_trajectory, validate_plan, DEFAULT_MAX_STEP};

/// A single-turn text completion.
pub trait ChatModel: Send + Sync {
    fn complete(&self, prompt: &str) -> crate::Result<String>;
}
