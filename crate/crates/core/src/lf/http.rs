//! Ollama-style chat client: request construction, retries with jittered
//! exponential backoff, and the per-location labeling flows.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LocationRecord, WeakLabel};

use super::answer::{build_aggregation_text, parse_binary_answer};
use super::{LfError, LfKind, LfSpec, VlmEndpointConfig};

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    images: Option<Vec<String>>,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    stream: bool,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

/// Serialized `/api/chat` body: a single user message carrying the prompt
/// text and the base64-encoded images (key omitted when there are none).
pub fn build_chat_request(
    model: &str,
    text: &str,
    images: &[Vec<u8>],
    max_payload_bytes: usize,
) -> Result<Vec<u8>, LfError> {
    let encoded = (!images.is_empty())
        .then(|| images.iter().map(|bytes| BASE64.encode(bytes)).collect());
    let request = ChatRequest {
        model,
        stream: false,
        messages: vec![ChatMessage {
            role: "user",
            content: text,
            images: encoded,
        }],
    };
    let body = serde_json::to_vec(&request).expect("chat request serializes");
    if body.len() > max_payload_bytes {
        return Err(LfError::PayloadTooLarge {
            size: body.len(),
            limit: max_payload_bytes,
        });
    }
    Ok(body)
}

/// Blocking HTTP client bound to one endpoint.
pub struct ChatClient {
    http: reqwest::blocking::Client,
    config: VlmEndpointConfig,
    chat_url: String,
    probe_url: String,
}

impl ChatClient {
    pub fn new(config: &VlmEndpointConfig) -> Result<Self, LfError> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.request_timeout_s))
            .build()
            .map_err(|e| LfError::InvalidEndpoint(e.to_string()))?;
        let base = config.base_url.trim_end_matches('/');
        Ok(ChatClient {
            http,
            config: config.clone(),
            chat_url: format!("{base}/api/chat"),
            probe_url: format!("{base}/"),
        })
    }

    /// Startup reachability check; any HTTP response counts as reachable.
    pub fn probe(&self) -> Result<(), LfError> {
        self.http
            .get(&self.probe_url)
            .send()
            .map(|_| ())
            .map_err(|e| LfError::EndpointUnreachable {
                url: self.config.base_url.clone(),
                message: e.to_string(),
            })
    }

    /// Sends one chat request, retrying transport errors and 5xx/429
    /// responses with jittered exponential backoff. Returns the assistant
    /// message content.
    pub fn chat(&self, body: &[u8]) -> Result<String, String> {
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let base = self.config.backoff_base_s * 2f64.powi(attempt as i32 - 1);
                let jitter: f64 = rand::rng().random_range(0.5..1.0);
                std::thread::sleep(Duration::from_secs_f64(base * jitter));
            }
            let sent = self
                .http
                .post(&self.chat_url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.to_vec())
                .send();
            match sent {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return match response.json::<ChatResponse>() {
                            Ok(parsed) => Ok(parsed.message.content),
                            Err(e) => Err(format!("malformed chat response: {e}")),
                        };
                    }
                    last_error = format!("status {status}");
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        return Err(last_error);
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(format!("{last_error} (after {attempts} attempts)"))
    }
}

fn load_images(record: &LocationRecord) -> Result<Vec<Vec<u8>>, String> {
    record
        .images
        .iter()
        .map(|image| {
            std::fs::read(&image.path).map_err(|e| format!("image '{}': {e}", image.path))
        })
        .collect()
}

/// Labels one location according to the spec's VLM paradigm. Any error here
/// is a per-location failure; the column runner records an abstain for it.
pub(crate) fn label_location(
    spec: &LfSpec,
    record: &LocationRecord,
    client: &ChatClient,
) -> Result<WeakLabel, String> {
    match &spec.kind {
        LfKind::VlmSingleQuestion {
            model, question, ..
        } => {
            let images = load_images(record)?;
            let body =
                build_chat_request(model, question, &images, client.config.max_payload_bytes)
                    .map_err(|e| e.to_string())?;
            let content = client.chat(&body)?;
            Ok(parse_binary_answer(&content))
        }
        LfKind::VlmMultiQuestion {
            vlm_model,
            llm_model,
            questions,
            aggregation_prompt,
            ..
        } => {
            let images = load_images(record)?;
            let mut answers = Vec::with_capacity(questions.len());
            for question in questions {
                let answer = build_chat_request(
                    vlm_model,
                    question,
                    &images,
                    client.config.max_payload_bytes,
                )
                .map_err(|e| e.to_string())
                .and_then(|body| client.chat(&body));
                answers.push(match answer {
                    Ok(text) => text,
                    Err(message) => {
                        log::warn!(
                            "lf '{}': location '{}': question failed: {message}",
                            spec.name,
                            record.location_id
                        );
                        "(no answer)".to_string()
                    }
                });
            }
            let transcript = build_aggregation_text(aggregation_prompt, questions, &answers);
            let body = build_chat_request(
                llm_model,
                &transcript,
                &[],
                client.config.max_payload_bytes,
            )
            .map_err(|e| e.to_string())?;
            let content = client.chat(&body)?;
            Ok(parse_binary_answer(&content))
        }
        LfKind::Synthetic { .. } => unreachable!("synthetic kinds never reach the HTTP path"),
    }
}
