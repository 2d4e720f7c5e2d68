use std::time::Duration;

use thiserror::Error;

use super::ServiceKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("{kind} request timed out after {:.2}s", elapsed.as_secs_f64())]
    Timeout { kind: ServiceKind, elapsed: Duration },

    #[error("{kind} service answered HTTP {status}: {body}")]
    Http { kind: ServiceKind, status: u16, body: String },

    #[error("{kind} service sent a malformed payload: {detail}")]
    Malformed { kind: ServiceKind, detail: String },

    #[error("{kind} transport failure: {detail}")]
    Transport { kind: ServiceKind, detail: String },

    #[error("{kind} payload failed shape checks: {detail}")]
    Shape { kind: ServiceKind, detail: String },

    #[error("no endpoint configured for {0}")]
    Unconfigured(ServiceKind),

    #[error("endpoint for {expected} used for a {got} call")]
    WrongKind { expected: ServiceKind, got: ServiceKind },
}

impl GatewayError {
    /// Worth retrying: timeouts, transport failures, 429 and 5xx.
    pub fn is_transient(&self) -> bool {
        match self {
            Self::Timeout { .. } | Self::Transport { .. } => true,
            Self::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    pub fn kind(&self) -> ServiceKind {
        match self {
            Self::Timeout { kind, .. }
            | Self::Http { kind, .. }
            | Self::Malformed { kind, .. }
            | Self::Transport { kind, .. }
            | Self::Shape { kind, .. } => *kind,
            Self::Unconfigured(kind) => *kind,
            Self::WrongKind { got, .. } => *got,
        }
    }
}
