//! Labeling functions: a common column-runner contract, synthetic noisy
//! voters for benchmarks, and HTTP adapters for the single-question and
//! multi-question VLM prompting paradigms against an Ollama-style endpoint.

mod answer;
mod http;
mod synthetic;

pub use answer::{build_aggregation_text, parse_binary_answer};
pub use http::{build_chat_request, ChatClient};
pub use synthetic::{generate_benchmark, synthetic_label, BenchmarkParams, SyntheticBenchmark};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, DatasetManifest, GroundTruthSet, WeakLabel};

#[derive(Debug, Error)]
pub enum LfError {
    #[error("endpoint '{url}' unreachable: {message}")]
    EndpointUnreachable { url: String, message: String },
    #[error("labeling function '{name}' is a VLM kind but no endpoint was supplied")]
    MissingEndpoint { name: String },
    #[error("synthetic labeling function '{name}' requires a ground-truth set")]
    MissingTruth { name: String },
    #[error("ground truth is misaligned with the manifest at row {index}")]
    TruthMisaligned { index: usize },
    #[error("labeling function '{name}': {message}")]
    InvalidSpec { name: String, message: String },
    #[error("request payload is {size} bytes, over the {limit}-byte cap")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("invalid endpoint config: {0}")]
    InvalidEndpoint(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// How one labeling function produces votes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LfKind {
    /// Noisy oracle: abstains with probability `abstain_rate`, otherwise
    /// reports the true class with probability `accuracy`.
    Synthetic {
        accuracy: f64,
        abstain_rate: f64,
        #[serde(default)]
        seed: u64,
    },
    /// One question, answered directly by the VLM over the location's images.
    VlmSingleQuestion {
        endpoint: String,
        model: String,
        question: String,
    },
    /// A battery of questions answered by the VLM; an LLM aggregates the
    /// transcript into the final yes/no.
    VlmMultiQuestion {
        endpoint: String,
        vlm_model: String,
        llm_model: String,
        questions: Vec<String>,
        aggregation_prompt: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LfSpec {
    pub name: String,
    pub kind: LfKind,
}

impl LfSpec {
    pub fn endpoint_name(&self) -> Option<&str> {
        match &self.kind {
            LfKind::Synthetic { .. } => None,
            LfKind::VlmSingleQuestion { endpoint, .. } => Some(endpoint),
            LfKind::VlmMultiQuestion { endpoint, .. } => Some(endpoint),
        }
    }

    fn validate(&self) -> Result<(), LfError> {
        let fail = |message: String| LfError::InvalidSpec {
            name: self.name.clone(),
            message,
        };
        match &self.kind {
            LfKind::Synthetic {
                accuracy,
                abstain_rate,
                ..
            } => {
                if !(*accuracy > 0.0 && *accuracy <= 1.0) {
                    return Err(fail(format!("accuracy {accuracy} outside (0, 1]")));
                }
                if !(*abstain_rate >= 0.0 && *abstain_rate < 1.0) {
                    return Err(fail(format!("abstain_rate {abstain_rate} outside [0, 1)")));
                }
            }
            LfKind::VlmSingleQuestion { question, .. } => {
                if question.trim().is_empty() {
                    return Err(fail("question is empty".into()));
                }
            }
            LfKind::VlmMultiQuestion { questions, .. } => {
                if questions.is_empty() {
                    return Err(fail("question list is empty".into()));
                }
            }
        }
        Ok(())
    }
}

fn default_timeout() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> f64 {
    2.0
}
fn default_in_flight() -> usize {
    4
}
fn default_payload_cap() -> usize {
    64 * 1024 * 1024
}

/// Connection settings for one Ollama-style endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VlmEndpointConfig {
    pub base_url: String,
    #[serde(default = "default_timeout")]
    pub request_timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First retry waits this long (seconds); each further retry doubles it.
    /// Sleeps are jittered down by up to half.
    #[serde(default = "default_backoff")]
    pub backoff_base_s: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_payload_cap")]
    pub max_payload_bytes: usize,
}

impl VlmEndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        VlmEndpointConfig {
            base_url: base_url.into(),
            request_timeout_s: default_timeout(),
            max_retries: default_retries(),
            backoff_base_s: default_backoff(),
            max_in_flight: default_in_flight(),
            max_payload_bytes: default_payload_cap(),
        }
    }

    pub fn validate(&self) -> Result<(), LfError> {
        if !(self.request_timeout_s.is_finite() && self.request_timeout_s > 0.0) {
            return Err(LfError::InvalidEndpoint(format!(
                "request_timeout_s {} must be positive",
                self.request_timeout_s
            )));
        }
        if self.max_in_flight == 0 {
            return Err(LfError::InvalidEndpoint(
                "max_in_flight must be at least 1".into(),
            ));
        }
        if !(self.backoff_base_s.is_finite() && self.backoff_base_s >= 0.0) {
            return Err(LfError::InvalidEndpoint(format!(
                "backoff_base_s {} must be non-negative",
                self.backoff_base_s
            )));
        }
        Ok(())
    }
}

/// Everything a column run may need besides the spec and manifest: an
/// endpoint for VLM kinds, a ground truth for synthetic kinds.
#[derive(Default, Clone, Copy)]
pub struct RunContext<'a> {
    pub endpoint: Option<&'a VlmEndpointConfig>,
    pub truth: Option<&'a GroundTruthSet>,
}

/// Runs one labeling function over the whole manifest, producing one vote
/// per location in manifest order. Per-location failures degrade to Abstain;
/// only startup problems (bad spec, unreachable endpoint, missing truth)
/// abort the column.
pub fn run_labeling_function(
    spec: &LfSpec,
    manifest: &DatasetManifest,
    ctx: RunContext<'_>,
) -> Result<Vec<WeakLabel>, LfError> {
    run_labeling_function_resumable(spec, manifest, ctx, &BTreeMap::new(), &|_, _| {})
}

/// As [`run_labeling_function`], but slots listed in `completed` are taken
/// as-is (resume support) and `on_result` fires once per freshly labeled
/// location, serialized, as soon as its vote is known.
pub fn run_labeling_function_resumable(
    spec: &LfSpec,
    manifest: &DatasetManifest,
    ctx: RunContext<'_>,
    completed: &BTreeMap<usize, WeakLabel>,
    on_result: &(dyn Fn(usize, WeakLabel) + Sync),
) -> Result<Vec<WeakLabel>, LfError> {
    spec.validate()?;
    match &spec.kind {
        LfKind::Synthetic {
            accuracy,
            abstain_rate,
            seed,
        } => {
            let truth = ctx.truth.ok_or_else(|| LfError::MissingTruth {
                name: spec.name.clone(),
            })?;
            synthetic::run_synthetic_column(
                manifest,
                truth,
                *accuracy,
                *abstain_rate,
                *seed,
                completed,
                on_result,
            )
        }
        LfKind::VlmSingleQuestion { .. } | LfKind::VlmMultiQuestion { .. } => {
            let endpoint = ctx.endpoint.ok_or_else(|| LfError::MissingEndpoint {
                name: spec.name.clone(),
            })?;
            endpoint.validate()?;
            let client = ChatClient::new(endpoint)?;
            client.probe()?;
            let worker = |index: usize| {
                http::label_location(spec, &manifest.records()[index], &client)
                    .unwrap_or_else(|message| {
                        log::warn!(
                            "lf '{}': location '{}': {message}; recording abstain",
                            spec.name,
                            manifest.records()[index].location_id
                        );
                        WeakLabel::Abstain
                    })
            };
            Ok(run_concurrent(
                manifest.len(),
                endpoint.max_in_flight,
                completed,
                &worker,
                on_result,
            ))
        }
    }
}

/// Labels a single location under the multi-question paradigm: every
/// question goes to the VLM with the location's images, the transcript goes
/// to the LLM, and its reply is parsed for the final vote. Per-question
/// failures are recorded as "(no answer)"; a failed aggregation call (or any
/// other per-location failure) comes back as Abstain.
pub fn multi_question_label(
    spec: &LfSpec,
    record: &crate::data::LocationRecord,
    endpoint: &VlmEndpointConfig,
) -> Result<WeakLabel, LfError> {
    if !matches!(spec.kind, LfKind::VlmMultiQuestion { .. }) {
        return Err(LfError::InvalidSpec {
            name: spec.name.clone(),
            message: "not a multi-question labeling function".into(),
        });
    }
    spec.validate()?;
    endpoint.validate()?;
    let client = ChatClient::new(endpoint)?;
    Ok(http::label_location(spec, record, &client).unwrap_or_else(|message| {
        log::warn!(
            "lf '{}': location '{}': {message}; recording abstain",
            spec.name,
            record.location_id
        );
        WeakLabel::Abstain
    }))
}

/// Dispatches indices to a bounded worker pool and writes votes into a
/// pre-sized column, so output order never depends on completion order.
fn run_concurrent(
    n: usize,
    max_in_flight: usize,
    completed: &BTreeMap<usize, WeakLabel>,
    worker: &(dyn Fn(usize) -> WeakLabel + Sync),
    on_result: &(dyn Fn(usize, WeakLabel) + Sync),
) -> Vec<WeakLabel> {
    let results: Vec<Mutex<Option<WeakLabel>>> = (0..n)
        .map(|index| Mutex::new(completed.get(&index).copied()))
        .collect();
    let next = AtomicUsize::new(0);
    let sink = Mutex::new(());

    let threads = max_in_flight.min(n).max(1);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= n {
                    break;
                }
                if results[index].lock().expect("column slot").is_some() {
                    continue;
                }
                let vote = worker(index);
                *results[index].lock().expect("column slot") = Some(vote);
                let _guard = sink.lock().expect("result sink");
                on_result(index, vote);
            });
        }
    });

    results
        .into_iter()
        .map(|slot| slot.into_inner().expect("column slot").expect("slot filled"))
        .collect()
}
