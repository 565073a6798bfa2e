//! Pipeline configuration file: one strict JSON document shared by every
//! subcommand. Unknown keys are rejected everywhere so a typo in a long
//! labeling campaign fails at load, not after hours of requests.
//!
//! Relative paths (including question and prompt files) resolve against the
//! directory containing the config file; artifact paths default to well-known
//! names under `paths.out_dir` unless overridden.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::label_model::LabelModelConfig;
use crate::lf::{BenchmarkParams, LfKind, LfSpec, VlmEndpointConfig};
use crate::student::{MlpConfig, TrainingConfig};
use crate::voting::VotingScheme;

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    endpoints: BTreeMap<String, VlmEndpointConfig>,
    #[serde(default)]
    lfs: Vec<RawLfEntry>,
    #[serde(default)]
    label_model: LabelModelConfig,
    #[serde(default)]
    student: RawStudentSection,
    paths: RawPaths,
    #[serde(default)]
    eval: EvalSection,
    #[serde(default)]
    synth: BenchmarkParams,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLfEntry {
    name: String,
    kind: RawLfKind,
}

/// Config-level LF kinds: prompt texts may be inline or loaded from files
/// (UTF-8; question files hold one question per line).
#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum RawLfKind {
    Synthetic {
        accuracy: f64,
        abstain_rate: f64,
        #[serde(default)]
        seed: u64,
    },
    VlmSingleQuestion {
        endpoint: String,
        model: String,
        #[serde(default)]
        question: Option<String>,
        #[serde(default)]
        question_file: Option<PathBuf>,
    },
    VlmMultiQuestion {
        endpoint: String,
        vlm_model: String,
        llm_model: String,
        questions_file: PathBuf,
        aggregation_prompt_file: PathBuf,
    },
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudentSection {
    #[serde(default)]
    mlp: Option<MlpConfig>,
    #[serde(default)]
    training: Option<TrainingConfig>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPaths {
    out_dir: PathBuf,
    #[serde(default)]
    manifest: Option<PathBuf>,
    #[serde(default)]
    features: Option<PathBuf>,
    #[serde(default)]
    annotations: Option<PathBuf>,
    #[serde(default)]
    ground_truth: Option<PathBuf>,
    #[serde(default)]
    labels: Option<PathBuf>,
    #[serde(default)]
    pseudo_labels: Option<PathBuf>,
    #[serde(default)]
    label_model: Option<PathBuf>,
    #[serde(default)]
    student: Option<PathBuf>,
    #[serde(default)]
    train_log: Option<PathBuf>,
    #[serde(default)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub scheme: VotingScheme,
    pub threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            scheme: VotingScheme::StrictNegative,
            threshold: 0.5,
        }
    }
}

/// Fully resolved artifact locations.
#[derive(Debug, Clone)]
pub struct ResolvedPaths {
    pub out_dir: PathBuf,
    pub manifest: PathBuf,
    pub features: PathBuf,
    pub annotations: PathBuf,
    pub ground_truth: PathBuf,
    pub labels: PathBuf,
    pub pseudo_labels: PathBuf,
    pub label_model: PathBuf,
    pub student: PathBuf,
    pub train_log: PathBuf,
    pub metrics: PathBuf,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub endpoints: BTreeMap<String, VlmEndpointConfig>,
    pub lfs: Vec<LfSpec>,
    pub label_model: LabelModelConfig,
    pub student_mlp: Option<MlpConfig>,
    pub student_training: TrainingConfig,
    pub eval: EvalSection,
    pub synth: BenchmarkParams,
    pub paths: ResolvedPaths,
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn read_text(path: &Path, what: &str) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError(format!("{what} '{}': {e}", path.display())))
}

impl PipelineConfig {
    /// Parses and resolves a config file. `out_override` replaces
    /// `paths.out_dir` (the `--out` flag).
    pub fn load(path: &Path, out_override: Option<&Path>) -> Result<Self, ConfigError> {
        let text = read_text(path, "config")?;
        let raw: RawConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("config '{}': {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

        for (name, endpoint) in &raw.endpoints {
            endpoint
                .validate()
                .map_err(|e| ConfigError(format!("endpoint '{name}': {e}")))?;
        }

        let mut lfs = Vec::with_capacity(raw.lfs.len());
        for entry in &raw.lfs {
            lfs.push(LfSpec {
                name: entry.name.clone(),
                kind: entry.resolve_kind(&base)?,
            });
        }
        let mut seen = std::collections::HashSet::new();
        for spec in &lfs {
            if !seen.insert(spec.name.clone()) {
                return Err(ConfigError(format!(
                    "duplicate labeling-function name '{}'",
                    spec.name
                )));
            }
        }

        let out_dir = match out_override {
            Some(dir) => dir.to_path_buf(),
            None => resolve(&base, &raw.paths.out_dir),
        };
        let artifact = |explicit: &Option<PathBuf>, default_name: &str| match explicit {
            Some(p) => resolve(&base, p),
            None => out_dir.join(default_name),
        };
        let paths = ResolvedPaths {
            manifest: artifact(&raw.paths.manifest, "manifest.jsonl"),
            features: artifact(&raw.paths.features, "features.egf"),
            annotations: artifact(&raw.paths.annotations, "annotations.jsonl"),
            ground_truth: artifact(&raw.paths.ground_truth, "ground_truth.csv"),
            labels: artifact(&raw.paths.labels, "labels.csv"),
            pseudo_labels: artifact(&raw.paths.pseudo_labels, "pseudo_labels.csv"),
            label_model: artifact(&raw.paths.label_model, "label_model.json"),
            student: artifact(&raw.paths.student, "student.json"),
            train_log: artifact(&raw.paths.train_log, "train_log.csv"),
            metrics: artifact(&raw.paths.metrics, "metrics.json"),
            out_dir,
        };

        Ok(PipelineConfig {
            endpoints: raw.endpoints,
            lfs,
            label_model: raw.label_model,
            student_mlp: raw.student.mlp,
            student_training: raw.student.training.unwrap_or_default(),
            eval: raw.eval,
            synth: raw.synth,
            paths,
        })
    }
}

impl RawLfEntry {
    fn resolve_kind(&self, base: &Path) -> Result<LfKind, ConfigError> {
        match &self.kind {
            RawLfKind::Synthetic {
                accuracy,
                abstain_rate,
                seed,
            } => Ok(LfKind::Synthetic {
                accuracy: *accuracy,
                abstain_rate: *abstain_rate,
                seed: *seed,
            }),
            RawLfKind::VlmSingleQuestion {
                endpoint,
                model,
                question,
                question_file,
            } => {
                let question = match (question, question_file) {
                    (Some(text), None) => text.clone(),
                    (None, Some(file)) => {
                        read_text(&resolve(base, file), "question file")?.trim().to_string()
                    }
                    _ => {
                        return Err(ConfigError(format!(
                            "lf '{}': provide exactly one of question, question_file",
                            self.name
                        )))
                    }
                };
                Ok(LfKind::VlmSingleQuestion {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    question,
                })
            }
            RawLfKind::VlmMultiQuestion {
                endpoint,
                vlm_model,
                llm_model,
                questions_file,
                aggregation_prompt_file,
            } => {
                let questions: Vec<String> =
                    read_text(&resolve(base, questions_file), "questions file")?
                        .lines()
                        .map(str::trim)
                        .filter(|line| !line.is_empty())
                        .map(str::to_string)
                        .collect();
                if questions.is_empty() {
                    return Err(ConfigError(format!(
                        "lf '{}': questions file '{}' is empty",
                        self.name,
                        questions_file.display()
                    )));
                }
                let aggregation_prompt =
                    read_text(&resolve(base, aggregation_prompt_file), "aggregation prompt")?;
                Ok(LfKind::VlmMultiQuestion {
                    endpoint: endpoint.clone(),
                    vlm_model: vlm_model.clone(),
                    llm_model: llm_model.clone(),
                    questions,
                    aggregation_prompt,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn minimal(dir: &Path, extra: &str) -> PathBuf {
        let path = dir.join("config.json");
        fs::write(
            &path,
            format!(r#"{{"paths":{{"out_dir":"run"}}{extra}}}"#),
        )
        .unwrap();
        path
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let dir = tempdir().unwrap();
        let path = minimal(dir.path(), "");
        let cfg = PipelineConfig::load(&path, None).unwrap();
        assert_eq!(cfg.paths.out_dir, dir.path().join("run"));
        assert_eq!(cfg.paths.labels, dir.path().join("run/labels.csv"));
        assert_eq!(cfg.label_model.epochs, 100);
        assert_eq!(cfg.label_model.learning_rate, 0.01);
        assert_eq!(cfg.eval.threshold, 0.5);
        assert_eq!(cfg.eval.scheme, VotingScheme::StrictNegative);
        assert_eq!(cfg.synth.images_per_location, 8);
    }

    #[test]
    fn unknown_keys_rejected_everywhere() {
        let dir = tempdir().unwrap();
        let top = minimal(dir.path(), r#","surprise":1"#);
        assert!(PipelineConfig::load(&top, None).is_err());
        let nested = dir.path().join("nested.json");
        fs::write(
            &nested,
            r#"{"paths":{"out_dir":"run","bogus":"x"}}"#,
        )
        .unwrap();
        assert!(PipelineConfig::load(&nested, None).is_err());
        let lm = dir.path().join("lm.json");
        fs::write(
            &lm,
            r#"{"paths":{"out_dir":"run"},"label_model":{"epoch":5}}"#,
        )
        .unwrap();
        assert!(PipelineConfig::load(&lm, None).is_err());
    }

    #[test]
    fn question_files_are_loaded_config_relative() {
        let dir = tempdir().unwrap();
        fs::write(dir.path().join("qs.txt"), "Q one?\n\nQ two?\n").unwrap();
        fs::write(dir.path().join("prompt.txt"), "Aggregate.").unwrap();
        let path = dir.path().join("config.json");
        fs::write(
            &path,
            r#"{
              "paths": {"out_dir": "run"},
              "endpoints": {"local": {"base_url": "http://127.0.0.1:11434"}},
              "lfs": [
                {"name": "mq", "kind": {"type": "vlm_multi_question",
                  "endpoint": "local", "vlm_model": "v", "llm_model": "l",
                  "questions_file": "qs.txt", "aggregation_prompt_file": "prompt.txt"}}
              ]
            }"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path, None).unwrap();
        match &cfg.lfs[0].kind {
            LfKind::VlmMultiQuestion { questions, aggregation_prompt, .. } => {
                assert_eq!(questions, &vec!["Q one?".to_string(), "Q two?".to_string()]);
                assert_eq!(aggregation_prompt, "Aggregate.");
            }
            other => panic!("unexpected kind {other:?}"),
        }
    }

    #[test]
    fn out_override_wins() {
        let dir = tempdir().unwrap();
        let path = minimal(dir.path(), "");
        let cfg = PipelineConfig::load(&path, Some(Path::new("/elsewhere"))).unwrap();
        assert_eq!(cfg.paths.out_dir, Path::new("/elsewhere"));
        assert_eq!(cfg.paths.metrics, Path::new("/elsewhere/metrics.json"));
    }

    #[test]
    fn duplicate_lf_names_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(
            &path,
            r#"{
              "paths": {"out_dir": "run"},
              "lfs": [
                {"name": "a", "kind": {"type": "synthetic", "accuracy": 0.8, "abstain_rate": 0.1}},
                {"name": "a", "kind": {"type": "synthetic", "accuracy": 0.7, "abstain_rate": 0.1}}
              ]
            }"#,
        )
        .unwrap();
        assert!(PipelineConfig::load(&path, None).is_err());
    }
}
