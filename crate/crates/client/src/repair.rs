//! Optional model-assisted repair of outputs the deterministic pipeline
//! cannot parse.

use gdtbench_core::repair::{repair_output, stage, RepairOutcome};

use crate::client::VlmClient;
use crate::request::build_text_request;
use crate::ClientError;

pub const REPAIR_INSTRUCTION: &str = "Rewrite the user's text as a valid JSON array of objects with keys \
geometric_characteristic, tolerance, datum. Change formatting only, never content: do not add, remove or \
alter any symbol, value or datum. Respond with only the JSON array.";

/// Ask the repair endpoint to reformat `raw`; returns its text verbatim.
pub async fn llm_repair(client: &VlmClient, record_id: &str, raw: &str) -> Result<String, ClientError> {
    let request = build_text_request(client.config(), REPAIR_INSTRUCTION, raw);
    Ok(client.execute_with_retry(record_id, &request).await?.model_text)
}

/// Deterministic pipeline first; only when it fails to parse, and a repair
/// client is given, send the raw text for reformatting and run the pipeline
/// again on the answer.
pub async fn repair_with_llm(
    client: Option<&VlmClient>,
    record_id: &str,
    raw: &str,
) -> Result<RepairOutcome, ClientError> {
    let first = repair_output(record_id, raw);
    let Some(client) = client else {
        return Ok(first);
    };
    if first.report.parse_ok {
        return Ok(first);
    }
    let rewritten = llm_repair(client, record_id, raw).await?;
    let mut second = repair_output(record_id, &rewritten);
    if !second.report.parse_ok {
        return Err(ClientError::RepairRefused(second.report.error.unwrap_or_default()));
    }
    let mut stages = first.report.stage_applied;
    stages.push(stage::LLM_REPAIR.to_string());
    stages.append(&mut second.report.stage_applied);
    second.report.stage_applied = stages;
    Ok(second)
}
