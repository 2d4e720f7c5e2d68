use crate::gateway::GatewayError;
use crate::planner::PlanError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical error in step {t} -> {t_prev}: {detail}")]
    Numerical { t: usize, t_prev: usize, detail: String },

    #[error("codec error: {0}")]
    Codec(String),

    #[error("compositing error: {0}")]
    Compose(String),

    #[error(transparent)]
    Plan(#[from] PlanError),

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    /// A pipeline stage failed. `raw` carries the model response that caused
    /// the failure, when there was one.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
        raw: Option<String>,
    },

    #[error("manifest check failed: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Self::Data(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str, raw: Option<String>) -> Self {
        Self::Stage { stage, source: Box::new(self), raw }
    }
}
