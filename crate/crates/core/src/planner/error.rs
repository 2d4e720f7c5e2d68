use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid planner input: {0}")]
    Input(String),

    #[error("no JSON block found in the model response")]
    NoJson,

    #[error("plan JSON could not be read: {0}")]
    Parse(String),

    /// Box or placement problem. Frame and object indices are 0-based
    /// positions in the response.
    #[error("{detail} at frame {frame}, object {object}")]
    Schema { frame: usize, object: usize, detail: String },

    #[error("object `{object}` moves {displacement:.3} of the frame diagonal per frame between frames {from} and {to} (limit {max_step})")]
    Continuity { object: String, from: usize, to: usize, displacement: f64, max_step: f64 },

    #[error("object `{object}` vanishes after frame {vanished_after} and reappears at frame {reappears_at}")]
    VanishReappear { object: String, vanished_after: usize, reappears_at: usize },

    #[error("plan frame structure: {0}")]
    Frames(String),

    #[error("layout does not fit: {0}")]
    Layout(String),
}
