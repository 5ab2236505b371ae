//! Zero-shot inference against vision-language model endpoints.
//!
//! [`request`] builds style-specific bodies, [`client::VlmClient`] sends them
//! with retries and runs resumable bounded-concurrency batches, and [`repair`]
//! offers the optional model-assisted output repair pass.

use thiserror::Error;

pub mod client;
pub mod config;
pub mod repair;
pub mod request;
#[cfg(feature = "stub")]
pub mod stub;

pub use client::{BatchSummary, RawModelOutput, VlmClient};
pub use config::{ApiStyle, ClientConfig, EndpointConfig};
pub use request::{build_request, WireRequest};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("image is {size} bytes, above the {cap} byte cap")]
    ImageTooLarge { size: usize, cap: usize },
    #[error("image is not a PNG")]
    NotPng,
    #[error("unsupported endpoint style {0:?}")]
    UnsupportedStyle(String),
    #[error("environment variable {0} with the API key is not set")]
    MissingApiKey(String),
    #[error("authentication rejected (HTTP {status})")]
    AuthError { status: u16 },
    #[error("gave up after {attempts} attempts (last status: {})", last_status.map_or("timeout".to_string(), |s| s.to_string()))]
    ExhaustedRetries { attempts: u32, last_status: Option<u16> },
    #[error("HTTP {status}: {body}")]
    HttpStatus { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("repair endpoint output is still not valid JSON: {0}")]
    RepairRefused(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
