//! Clients for the external model services, their wire format, and a mock
//! server that stands in for all of them.

mod client;
mod endpoint;
mod error;
pub mod mock;
pub mod wire;

pub use client::{CallRecord, GatewayClient, RemoteDenoiser, RemoteVae};
pub use endpoint::{EndpointSet, ServiceEndpoint, ServiceKind};
pub use error::GatewayError;
pub use mock::{MockConfig, MockServer};
pub use wire::ImageTransport;
