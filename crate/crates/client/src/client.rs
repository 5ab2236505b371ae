//! HTTP execution with retries, and the resumable batch runner.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use gdtbench_core::fsutil::write_atomic;
use gdtbench_core::ManifestRecord;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ApiStyle, EndpointConfig};
use crate::request::{build_request, extract_text, WireRequest};
use crate::ClientError;

/// Verbatim model response for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawModelOutput {
    pub record_id: String,
    pub model_text: String,
    pub http_status: u16,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

pub struct VlmClient {
    config: EndpointConfig,
    api_key: String,
    http: reqwest::Client,
}

impl fmt::Debug for VlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VlmClient").field("config", &self.config).field("api_key", &"<redacted>").finish()
    }
}

impl VlmClient {
    /// Resolve the API key from the environment variable named in the config.
    pub fn from_env(config: EndpointConfig) -> Result<Self, ClientError> {
        let key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ClientError::MissingApiKey(config.api_key_env.clone()))?;
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: EndpointConfig, api_key: impl Into<String>) -> Result<Self, ClientError> {
        config.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self { config, api_key: api_key.into(), http })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn backoff(&self, retry: u32) -> Duration {
        // Full jitter: uniform in [0, base * 2^(retry-1)].
        let cap = self.config.backoff_base_ms.saturating_mul(1u64 << (retry - 1).min(20));
        Duration::from_millis(rand::rng().random_range(0..=cap))
    }

    async fn send_once(&self, request: &WireRequest) -> Result<(u16, String), reqwest::Error> {
        let mut builder = self.http.post(&request.url);
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        builder = match self.config.style {
            ApiStyle::AnthropicMessages => builder.header("x-api-key", &self.api_key),
            ApiStyle::OpenaiChat | ApiStyle::GenericJson => {
                builder.header("authorization", format!("Bearer {}", self.api_key))
            }
        };
        let body = serde_json::to_vec(&request.body).expect("request bodies serialize");
        let response = builder.body(body).send().await?;
        let status = response.status().as_u16();
        let text = response.text().await?;
        Ok((status, text))
    }

    /// Send `request`, retrying on 429, 5xx and timeouts with exponential
    /// backoff. 401/403 fail immediately.
    pub async fn execute_with_retry(
        &self,
        record_id: &str,
        request: &WireRequest,
    ) -> Result<RawModelOutput, ClientError> {
        let started = Instant::now();
        let max_attempts = self.config.max_retries + 1;
        let mut last_status = None;
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                tokio::time::sleep(self.backoff(attempt - 1)).await;
            }
            match self.send_once(request).await {
                Ok((status, body)) if (200..300).contains(&status) => {
                    let model_text = extract_text(self.config.style, &body)?;
                    return Ok(RawModelOutput {
                        record_id: record_id.to_string(),
                        model_text,
                        http_status: status,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempt_count: attempt,
                    });
                }
                Ok((status @ (401 | 403), _)) => return Err(ClientError::AuthError { status }),
                Ok((status, _)) if status == 429 || status >= 500 => {
                    log::debug!("{record_id}: attempt {attempt} got HTTP {status}");
                    last_status = Some(status);
                }
                Ok((status, body)) => {
                    return Err(ClientError::HttpStatus { status, body: body.chars().take(500).collect() })
                }
                Err(e) if e.is_timeout() => {
                    log::debug!("{record_id}: attempt {attempt} timed out");
                    last_status = None;
                }
                Err(e) => return Err(ClientError::Transport(e.to_string())),
            }
        }
        Err(ClientError::ExhaustedRetries { attempts: max_attempts, last_status })
    }

    /// Run every record of `manifest` that has no `<out_dir>/<record_id>.raw.txt`
    /// yet, with at most `max_concurrency` requests in flight. Failures are
    /// collected, not fatal.
    pub async fn run_batch(&self, manifest: &[ManifestRecord], out_dir: &Path) -> Result<BatchSummary, ClientError> {
        let io = |source| ClientError::Io { path: out_dir.display().to_string(), source };
        std::fs::create_dir_all(out_dir).map_err(io)?;
        tempfile::NamedTempFile::new_in(out_dir).map_err(io)?;

        let mut summary = BatchSummary::default();
        let mut pending = Vec::new();
        for record in manifest {
            if raw_output_path(out_dir, &record.record_id).exists() {
                summary.skipped += 1;
            } else {
                pending.push(record);
            }
        }

        let done = AtomicUsize::new(0);
        let total = pending.len();
        let results: Vec<(String, Result<RawModelOutput, ClientError>)> = stream::iter(pending)
            .map(|record| {
                let done = &done;
                async move {
                    let result = self.run_one(record, out_dir).await;
                    let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                    log::info!("[{n}/{total}] {} {}", record.record_id, if result.is_ok() { "ok" } else { "failed" });
                    (record.record_id.clone(), result)
                }
            })
            .buffer_unordered(self.config.max_concurrency)
            .collect()
            .await;

        for (record_id, result) in results {
            match result {
                Ok(out) => {
                    summary.succeeded += 1;
                    summary.total_latency_ms += out.latency_ms;
                }
                Err(e) => {
                    log::warn!("{record_id}: {e}");
                    summary.failed.push(FailedRecord { record_id, error: e.to_string() });
                }
            }
        }
        summary.failed.sort_by(|a, b| a.record_id.cmp(&b.record_id));
        Ok(summary)
    }

    async fn run_one(&self, record: &ManifestRecord, out_dir: &Path) -> Result<RawModelOutput, ClientError> {
        let image = tokio::fs::read(&record.image_path)
            .await
            .map_err(|source| ClientError::Io { path: record.image_path.display().to_string(), source })?;
        let request = build_request(&self.config, &record.query, &image)?;
        let output = self.execute_with_retry(&record.record_id, &request).await?;
        let path = raw_output_path(out_dir, &record.record_id);
        write_atomic(&path, output.model_text.as_bytes())
            .map_err(|source| ClientError::Io { path: path.display().to_string(), source })?;
        Ok(output)
    }
}

pub const RAW_SUFFIX: &str = ".raw.txt";

pub fn raw_output_path(out_dir: &Path, record_id: &str) -> PathBuf {
    out_dir.join(format!("{record_id}{RAW_SUFFIX}"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailedRecord {
    pub record_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BatchSummary {
    pub succeeded: usize,
    pub skipped: usize,
    pub failed: Vec<FailedRecord>,
    pub total_latency_ms: u64,
}
