//! Request bodies and response text extraction for each endpoint style.

use base64::Engine;
use gdtbench_core::dataset::has_png_signature;
use serde_json::{json, Value};

use crate::config::{ApiStyle, EndpointConfig};
use crate::ClientError;

/// Output contract sent as the system / instruction segment.
pub const DEFAULT_SYSTEM_PROMPT: &str = "You extract GD&T feature control frames from 2D engineering drawings. \
Respond with only a JSON array of objects with keys geometric_characteristic, tolerance, datum, in drawing order. \
Use the Unicode GD&T symbol for geometric_characteristic, write the tolerance exactly as shown (including any \
diameter symbol and material condition modifier), and join datum references with \"|\" in precedence order, \
using an empty string when a frame has no datum.";

pub const ANTHROPIC_VERSION: &str = "2023-06-01";

/// An HTTP request ready to send, minus credentials.
#[derive(Debug, Clone, PartialEq)]
pub struct WireRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Value,
}

fn endpoint_url(config: &EndpointConfig) -> String {
    let base = config.base_url.trim_end_matches('/');
    match config.style {
        ApiStyle::OpenaiChat => format!("{base}/chat/completions"),
        ApiStyle::AnthropicMessages => format!("{base}/messages"),
        ApiStyle::GenericJson => base.to_string(),
    }
}

fn style_headers(style: ApiStyle) -> Vec<(String, String)> {
    let mut headers = vec![("content-type".to_string(), "application/json".to_string())];
    if style == ApiStyle::AnthropicMessages {
        headers.push(("anthropic-version".to_string(), ANTHROPIC_VERSION.to_string()));
    }
    headers
}

fn system_prompt(config: &EndpointConfig) -> &str {
    config.system_prompt.as_deref().unwrap_or(DEFAULT_SYSTEM_PROMPT)
}

/// Build an inference request carrying `query` and a PNG image.
pub fn build_request(config: &EndpointConfig, query: &str, image: &[u8]) -> Result<WireRequest, ClientError> {
    if image.len() > config.max_image_bytes {
        return Err(ClientError::ImageTooLarge { size: image.len(), cap: config.max_image_bytes });
    }
    if !has_png_signature(image) {
        return Err(ClientError::NotPng);
    }
    let data = base64::engine::general_purpose::STANDARD.encode(image);
    let system = system_prompt(config);
    let body = match config.style {
        ApiStyle::OpenaiChat => json!({
            "model": config.model,
            "temperature": 0,
            "max_tokens": config.max_tokens,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": [
                    {"type": "text", "text": query},
                    {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{data}")}},
                ]},
            ],
        }),
        ApiStyle::AnthropicMessages => json!({
            "model": config.model,
            "max_tokens": config.max_tokens,
            "temperature": 0,
            "system": system,
            "messages": [
                {"role": "user", "content": [
                    {"type": "image", "source": {"type": "base64", "media_type": "image/png", "data": data}},
                    {"type": "text", "text": query},
                ]},
            ],
        }),
        ApiStyle::GenericJson => json!({
            "model": config.model,
            "system": system,
            "query": query,
            "image": {"media_type": "image/png", "data": data},
        }),
    };
    Ok(WireRequest { url: endpoint_url(config), headers: style_headers(config.style), body })
}

/// Text-only request with an explicit instruction, used for output repair.
pub fn build_text_request(config: &EndpointConfig, instruction: &str, text: &str) -> WireRequest {
    let body = match config.style {
        ApiStyle::OpenaiChat => json!({
            "model": config.model,
            "temperature": 0,
            "max_tokens": config.max_tokens,
            "messages": [
                {"role": "system", "content": instruction},
                {"role": "user", "content": text},
            ],
        }),
        ApiStyle::AnthropicMessages => json!({
            "model": config.model,
            "max_tokens": config.max_tokens,
            "temperature": 0,
            "system": instruction,
            "messages": [{"role": "user", "content": [{"type": "text", "text": text}]}],
        }),
        ApiStyle::GenericJson => json!({
            "model": config.model,
            "system": instruction,
            "query": text,
        }),
    };
    WireRequest { url: endpoint_url(config), headers: style_headers(config.style), body }
}

/// Pull the model's text out of a response body.
pub fn extract_text(style: ApiStyle, body: &str) -> Result<String, ClientError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| ClientError::BadResponse(format!("response is not JSON: {e}")))?;
    let text = match style {
        ApiStyle::OpenaiChat => value["choices"][0]["message"]["content"].as_str().map(str::to_string),
        ApiStyle::AnthropicMessages => value["content"].as_array().map(|blocks| {
            blocks.iter().filter(|b| b["type"] == "text").filter_map(|b| b["text"].as_str()).collect::<String>()
        }),
        ApiStyle::GenericJson => {
            ["text", "output", "response"].iter().find_map(|k| value[*k].as_str()).map(str::to_string)
        }
    };
    text.ok_or_else(|| ClientError::BadResponse(format!("no text in {} response", style)))
}
