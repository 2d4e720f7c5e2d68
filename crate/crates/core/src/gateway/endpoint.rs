use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    Chat,
    T2i,
    I2v,
    T2v,
    Tag,
    Detect,
    Segment,
    Vae,
    Denoise,
}

impl ServiceKind {
    pub const ALL: [ServiceKind; 9] = [
        Self::Chat,
        Self::T2i,
        Self::I2v,
        Self::T2v,
        Self::Tag,
        Self::Detect,
        Self::Segment,
        Self::Vae,
        Self::Denoise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Chat => "chat",
            Self::T2i => "t2i",
            Self::I2v => "i2v",
            Self::T2v => "t2v",
            Self::Tag => "tag",
            Self::Detect => "detect",
            Self::Segment => "segment",
            Self::Vae => "vae",
            Self::Denoise => "denoise",
        }
    }

    /// `SKETCHGUIDE_<KIND>_URL`
    pub fn url_env_var(self) -> String {
        format!("SKETCHGUIDE_{}_URL", self.as_str().to_ascii_uppercase())
    }

    /// `SKETCHGUIDE_<KIND>_TOKEN`
    pub fn token_env_var(self) -> String {
        format!("SKETCHGUIDE_{}_TOKEN", self.as_str().to_ascii_uppercase())
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ServiceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown service kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceEndpoint {
    pub kind: ServiceKind,
    pub base_url: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further attempt.
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(skip_serializing, default)]
    pub auth_token: Option<String>,
}

fn default_backoff_ms() -> u64 {
    100
}

impl ServiceEndpoint {
    pub fn new(kind: ServiceKind, base_url: impl Into<String>) -> Self {
        Self {
            kind,
            base_url: base_url.into(),
            timeout_secs: 60.0,
            max_retries: 2,
            initial_backoff_ms: default_backoff_ms(),
            auth_token: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout_secs = timeout.as_secs_f64();
        self
    }

    pub fn with_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }

    pub fn with_backoff(mut self, initial: Duration) -> Self {
        self.initial_backoff_ms = initial.as_millis() as u64;
        self
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.auth_token = Some(token.into());
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::config(format!("{} endpoint timeout must be positive", self.kind)));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(Error::config(format!("{} endpoint URL `{}` is not http(s)", self.kind, self.base_url)));
        }
        Ok(())
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), path)
    }

    pub(crate) fn expect_kind(&self, kind: ServiceKind) -> std::result::Result<(), GatewayError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(GatewayError::WrongKind { expected: self.kind, got: kind })
        }
    }
}

/// Endpoints by kind. Kinds without an entry are unconfigured.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EndpointSet {
    #[serde(flatten)]
    pub endpoints: BTreeMap<ServiceKind, ServiceEndpoint>,
}

impl EndpointSet {
    /// Every kind pointing at one server, as with the mock.
    pub fn all_at(base_url: &str) -> Self {
        let endpoints = ServiceKind::ALL.into_iter().map(|k| (k, ServiceEndpoint::new(k, base_url))).collect();
        Self { endpoints }
    }

    pub fn insert(&mut self, endpoint: ServiceEndpoint) {
        self.endpoints.insert(endpoint.kind, endpoint);
    }

    pub fn get(&self, kind: ServiceKind) -> std::result::Result<&ServiceEndpoint, GatewayError> {
        self.endpoints.get(&kind).ok_or(GatewayError::Unconfigured(kind))
    }

    pub fn map(&self, mut f: impl FnMut(&mut ServiceEndpoint)) -> Self {
        let mut out = self.clone();
        out.endpoints.values_mut().for_each(&mut f);
        out
    }

    /// Applies `SKETCHGUIDE_<KIND>_URL` / `_TOKEN` overrides using `lookup`
    /// (normally `std::env::var`).
    pub fn with_overrides(mut self, lookup: impl Fn(&str) -> Option<String>) -> Self {
        for kind in ServiceKind::ALL {
            if let Some(url) = lookup(&kind.url_env_var()) {
                self.endpoints
                    .entry(kind)
                    .and_modify(|e| e.base_url = url.clone())
                    .or_insert_with(|| ServiceEndpoint::new(kind, url));
            }
            if let Some(token) = lookup(&kind.token_env_var()) {
                if let Some(e) = self.endpoints.get_mut(&kind) {
                    e.auth_token = Some(token);
                }
            }
        }
        self
    }

    pub fn from_env(self) -> Self {
        self.with_overrides(|k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<()> {
        self.endpoints.values().try_for_each(ServiceEndpoint::validate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_replace_urls_and_tokens() {
        let set = EndpointSet::all_at("http://127.0.0.1:1").with_overrides(|k| match k {
            "SKETCHGUIDE_CHAT_URL" => Some("https://llm.example".into()),
            "SKETCHGUIDE_CHAT_TOKEN" => Some("secret".into()),
            _ => None,
        });
        let chat = set.get(ServiceKind::Chat).unwrap();
        assert_eq!(chat.base_url, "https://llm.example");
        assert_eq!(chat.auth_token.as_deref(), Some("secret"));
        assert_eq!(set.get(ServiceKind::T2i).unwrap().base_url, "http://127.0.0.1:1");
    }

    #[test]
    fn token_is_not_serialized() {
        let e = ServiceEndpoint::new(ServiceKind::Detect, "http://x").with_token("secret");
        assert!(!serde_json::to_string(&e).unwrap().contains("secret"));
    }

    #[test]
    fn validation() {
        assert!(ServiceEndpoint::new(ServiceKind::Tag, "ftp://x").validate().is_err());
        assert!(ServiceEndpoint::new(ServiceKind::Tag, "http://x").with_timeout(Duration::ZERO).validate().is_err());
        assert!(EndpointSet::default().get(ServiceKind::Vae).is_err());
        assert_eq!("segment".parse::<ServiceKind>().unwrap(), ServiceKind::Segment);
    }
}
