//! Subcommand implementations behind the `wsgully` binary.
//!
//! Every command reads and writes the artifacts named in the config, writes
//! primary outputs atomically (temp file + rename), and maps failures onto
//! the fixed exit-code contract: 1 usage, 2 invalid config or params,
//! 3 endpoint failure, 4 data misalignment.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use crate::config::PipelineConfig;
use crate::data::{
    read_annotations, read_feature_store, read_ground_truth, read_label_matrix, read_manifest,
    read_pseudo_labels, write_feature_store, write_ground_truth, write_label_matrix,
    write_manifest, write_pseudo_labels, DataError, GroundTruthSet, LabelMatrix, WeakLabel,
};
use crate::label_model::{fit, majority_vote, LabelModelError, TrainedLabelModel};
use crate::lf::{
    generate_benchmark, run_labeling_function_resumable, ChatClient, LfError, LfSpec, RunContext,
    VlmEndpointConfig,
};
use crate::metrics::{binarize_all, compute_metrics, confusion, render_table, MetricsError};
use crate::student::{train_student, MlpConfig, MlpParams, StudentError};
use crate::voting::{build_ground_truth, VotingError, VotingScheme};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ENDPOINT: i32 = 3;
pub const EXIT_MISALIGNED: i32 = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Endpoint(String),
    #[error("{0}")]
    Misaligned(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => EXIT_CONFIG,
            PipelineError::Endpoint(_) => EXIT_ENDPOINT,
            PipelineError::Misaligned(_) => EXIT_MISALIGNED,
        }
    }
}

impl From<crate::config::ConfigError> for PipelineError {
    fn from(e: crate::config::ConfigError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<DataError> for PipelineError {
    fn from(e: DataError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<LabelModelError> for PipelineError {
    fn from(e: LabelModelError) -> Self {
        match e {
            LabelModelError::ColumnCountMismatch { .. } => PipelineError::Misaligned(e.to_string()),
            other => PipelineError::Config(other.to_string()),
        }
    }
}

impl From<LfError> for PipelineError {
    fn from(e: LfError) -> Self {
        match e {
            LfError::EndpointUnreachable { .. } => PipelineError::Endpoint(e.to_string()),
            LfError::TruthMisaligned { .. } => PipelineError::Misaligned(e.to_string()),
            other => PipelineError::Config(other.to_string()),
        }
    }
}

impl From<StudentError> for PipelineError {
    fn from(e: StudentError) -> Self {
        match e {
            StudentError::IdMisalignment { .. } | StudentError::LengthMismatch { .. } => {
                PipelineError::Misaligned(e.to_string())
            }
            other => PipelineError::Config(other.to_string()),
        }
    }
}

impl From<VotingError> for PipelineError {
    fn from(e: VotingError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<MetricsError> for PipelineError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::IdMisalignment { .. } | MetricsError::LengthMismatch { .. } => {
                PipelineError::Misaligned(e.to_string())
            }
            other => PipelineError::Config(other.to_string()),
        }
    }
}

fn require_input(path: &Path, what: &str) -> Result<(), PipelineError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Config(format!(
            "missing {what}: {}",
            path.display()
        )))
    }
}

fn ensure_out_dir(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    fs::create_dir_all(&cfg.paths.out_dir).map_err(|e| {
        PipelineError::Config(format!(
            "cannot create out dir {}: {e}",
            cfg.paths.out_dir.display()
        ))
    })
}

/// Generates a synthetic benchmark and writes all four artifacts.
pub fn cmd_synth(cfg: &PipelineConfig, seed: u64) -> Result<(), PipelineError> {
    ensure_out_dir(cfg)?;
    let bench = generate_benchmark(&cfg.synth, seed)?;
    write_manifest(&bench.manifest, &cfg.paths.manifest)?;
    write_label_matrix(&bench.label_matrix, &cfg.paths.labels)?;
    write_feature_store(&bench.feature_store, &cfg.paths.features)?;
    write_ground_truth(&bench.ground_truth, &cfg.paths.ground_truth)?;
    eprintln!(
        "synth: {} locations, {} labeling functions, {} feature dims -> {}",
        bench.manifest.len(),
        bench.label_matrix.n_lfs(),
        bench.feature_store.n_images() * bench.feature_store.dim(),
        cfg.paths.out_dir.display()
    );
    Ok(())
}

fn journal_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.paths.out_dir.join(".labels.partial")
}

fn journal_path(dir: &Path, index: usize, name: &str) -> PathBuf {
    let sanitized: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    dir.join(format!("{index:02}_{sanitized}.csv"))
}

fn load_journal(
    path: &Path,
    index_of: &std::collections::HashMap<String, usize>,
) -> Result<BTreeMap<usize, WeakLabel>, PipelineError> {
    let mut completed = BTreeMap::new();
    if !path.exists() {
        return Ok(completed);
    }
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Config(format!("journal {}: {e}", path.display())))?;
    for line in text.lines() {
        let Some((id, token)) = line.rsplit_once(',') else {
            continue; // torn tail line from an interrupted write
        };
        let (Some(&index), Some(vote)) = (index_of.get(id), WeakLabel::from_token(token)) else {
            continue;
        };
        completed.insert(index, vote);
    }
    Ok(completed)
}

/// Runs every configured labeling function as one column and writes the
/// label matrix. With `resume`, per-location progress journaled by an
/// interrupted run is reused instead of re-queried.
pub fn cmd_label(cfg: &PipelineConfig, resume: bool) -> Result<(), PipelineError> {
    if cfg.lfs.is_empty() {
        return Err(PipelineError::Config(
            "config has no labeling functions".into(),
        ));
    }
    require_input(&cfg.paths.manifest, "manifest")?;
    let manifest = read_manifest(&cfg.paths.manifest)?;

    let needs_truth = cfg
        .lfs
        .iter()
        .any(|spec| matches!(spec.kind, crate::lf::LfKind::Synthetic { .. }));
    let truth = if needs_truth {
        require_input(&cfg.paths.ground_truth, "ground truth (synthetic LFs)")?;
        Some(read_ground_truth(&cfg.paths.ground_truth)?)
    } else {
        None
    };

    let endpoint_for = |spec: &LfSpec| -> Result<Option<&VlmEndpointConfig>, PipelineError> {
        match spec.endpoint_name() {
            None => Ok(None),
            Some(name) => cfg.endpoints.get(name).map(Some).ok_or_else(|| {
                PipelineError::Config(format!(
                    "lf '{}' references unknown endpoint '{name}'",
                    spec.name
                ))
            }),
        }
    };

    // Probe every referenced endpoint before any work or file output.
    let mut probed = std::collections::HashSet::new();
    for spec in &cfg.lfs {
        if let Some(endpoint) = endpoint_for(spec)? {
            if probed.insert(endpoint.base_url.clone()) {
                let client = ChatClient::new(endpoint).map_err(PipelineError::from)?;
                client.probe().map_err(PipelineError::from)?;
            }
        }
    }

    ensure_out_dir(cfg)?;
    let journal = journal_dir(cfg);
    fs::create_dir_all(&journal)
        .map_err(|e| PipelineError::Config(format!("journal dir: {e}")))?;
    let index_of: std::collections::HashMap<String, usize> = manifest
        .location_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i))
        .collect();

    let mut columns: Vec<Vec<WeakLabel>> = Vec::with_capacity(cfg.lfs.len());
    for (lf_index, spec) in cfg.lfs.iter().enumerate() {
        let journal_file = journal_path(&journal, lf_index, &spec.name);
        let completed = if resume {
            load_journal(&journal_file, &index_of)?
        } else {
            BTreeMap::new()
        };
        let writer = Mutex::new(
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&journal_file)
                .map_err(|e| PipelineError::Config(format!("journal: {e}")))?,
        );
        let ids = manifest.location_ids();
        let on_result = |index: usize, vote: WeakLabel| {
            let mut file = writer.lock().expect("journal writer");
            let _ = writeln!(file, "{},{}", ids[index], vote.to_token());
            let _ = file.flush();
        };
        let ctx = RunContext {
            endpoint: endpoint_for(spec)?,
            truth: truth.as_ref(),
        };
        let column =
            run_labeling_function_resumable(spec, &manifest, ctx, &completed, &on_result)?;
        let abstains = column.iter().filter(|v| v.is_abstain()).count();
        eprintln!(
            "label: {} -> {}/{} abstains ({:.1}%)",
            spec.name,
            abstains,
            column.len(),
            100.0 * abstains as f64 / column.len().max(1) as f64
        );
        columns.push(column);
    }

    let mut votes = Vec::with_capacity(manifest.len() * cfg.lfs.len());
    for row in 0..manifest.len() {
        for column in &columns {
            votes.push(column[row]);
        }
    }
    let matrix = LabelMatrix::new(
        manifest.location_ids(),
        cfg.lfs.iter().map(|spec| spec.name.clone()).collect(),
        votes,
    )?;
    write_label_matrix(&matrix, &cfg.paths.labels)?;
    let _ = fs::remove_dir_all(&journal);
    Ok(())
}

/// Fits the label model on the vote matrix and writes the checkpoint.
pub fn cmd_fit(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    require_input(&cfg.paths.labels, "label matrix")?;
    let matrix = read_label_matrix(&cfg.paths.labels)?;
    let model = fit(&matrix, &cfg.label_model)?;
    ensure_out_dir(cfg)?;
    model.save(&cfg.paths.label_model)?;
    println!("final NLL: {}", model.final_nll);
    Ok(())
}

/// Produces pseudo-labels for the whole matrix from a fitted checkpoint.
pub fn cmd_infer(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    require_input(&cfg.paths.labels, "label matrix")?;
    require_input(&cfg.paths.label_model, "label-model checkpoint")?;
    let matrix = read_label_matrix(&cfg.paths.labels)?;
    let model = TrainedLabelModel::load(&cfg.paths.label_model)?;
    if model.lf_names != matrix.lf_names() {
        return Err(PipelineError::Misaligned(format!(
            "checkpoint was fit on columns {:?}, matrix has {:?}",
            model.lf_names,
            matrix.lf_names()
        )));
    }
    let pseudo = model.predict_all(&matrix)?;
    ensure_out_dir(cfg)?;
    write_pseudo_labels(&pseudo, &cfg.paths.pseudo_labels)?;
    Ok(())
}

/// Aggregates expert annotations into ground truth under one scheme.
pub fn cmd_vote(
    cfg: &PipelineConfig,
    scheme_override: Option<VotingScheme>,
) -> Result<(), PipelineError> {
    require_input(&cfg.paths.manifest, "manifest")?;
    require_input(&cfg.paths.annotations, "annotations")?;
    let manifest = read_manifest(&cfg.paths.manifest)?;
    let annotations = read_annotations(&cfg.paths.annotations)?;
    let scheme = scheme_override.unwrap_or(cfg.eval.scheme);
    let gt = build_ground_truth(&manifest, &annotations, scheme)?;
    ensure_out_dir(cfg)?;
    write_ground_truth(&gt, &cfg.paths.ground_truth)?;
    eprintln!(
        "vote: {} of {} locations positive under {scheme}",
        gt.labels()
            .iter()
            .filter(|&&l| l == crate::data::ClassLabel::Positive)
            .count(),
        gt.len()
    );
    Ok(())
}

/// Trains the student on (features, pseudo-labels) and writes the checkpoint
/// plus the per-epoch loss log.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    require_input(&cfg.paths.features, "feature store")?;
    require_input(&cfg.paths.pseudo_labels, "pseudo-labels")?;
    let features = read_feature_store(&cfg.paths.features)?;
    let targets = read_pseudo_labels(&cfg.paths.pseudo_labels)?;
    let mlp = match &cfg.student_mlp {
        Some(mlp) => mlp.clone(),
        None => MlpConfig {
            layer_dims: vec![features.n_images() * features.dim(), 2],
            seed: 0,
        },
    };
    let trained = train_student(&features, &targets, &mlp, &cfg.student_training)?;
    ensure_out_dir(cfg)?;
    trained.params.save(&cfg.paths.student)?;
    let mut log = String::from("epoch,mean_loss\n");
    for (epoch, loss) in trained.epoch_losses.iter().enumerate() {
        log.push_str(&format!("{},{}\n", epoch + 1, loss));
    }
    crate::fsutil::write_atomic(&cfg.paths.train_log, log.as_bytes()).map_err(|e| {
        PipelineError::Config(format!("train log {}: {e}", cfg.paths.train_log.display()))
    })?;
    eprintln!(
        "train: {} epochs, first loss {:.6}, last loss {:.6}",
        trained.epoch_losses.len(),
        trained.epoch_losses.first().copied().unwrap_or(f64::NAN),
        trained.epoch_losses.last().copied().unwrap_or(f64::NAN),
    );
    Ok(())
}

/// What to evaluate against the reference ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSource {
    /// One label-matrix column, abstains resolved by the single-column
    /// majority-vote rule (abstain goes Positive).
    LfColumn(String),
    /// Binarized pseudo-labels.
    Pseudo,
    /// Student checkpoint applied to the feature store, binarized.
    Student,
    /// An external ground-truth-shaped CSV (compare two labelings).
    Csv(PathBuf),
}

impl EvalSource {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        if let Some(name) = text.strip_prefix("lf:") {
            return Ok(EvalSource::LfColumn(name.to_string()));
        }
        if let Some(path) = text.strip_prefix("csv:") {
            return Ok(EvalSource::Csv(PathBuf::from(path)));
        }
        match text {
            "pseudo" => Ok(EvalSource::Pseudo),
            "student" => Ok(EvalSource::Student),
            other => Err(PipelineError::Config(format!(
                "unknown eval source '{other}' (expected lf:<name>, pseudo, student, csv:<path>)"
            ))),
        }
    }

    fn label(&self) -> String {
        match self {
            EvalSource::LfColumn(name) => format!("lf:{name}"),
            EvalSource::Pseudo => "pseudo".into(),
            EvalSource::Student => "student".into(),
            EvalSource::Csv(path) => format!("csv:{}", path.display()),
        }
    }
}

fn predictions_for(
    cfg: &PipelineConfig,
    source: &EvalSource,
    threshold: f64,
) -> Result<GroundTruthSet, PipelineError> {
    match source {
        EvalSource::LfColumn(name) => {
            require_input(&cfg.paths.labels, "label matrix")?;
            let matrix = read_label_matrix(&cfg.paths.labels)?;
            let column = matrix.lf_index(name).ok_or_else(|| {
                PipelineError::Config(format!("label matrix has no column '{name}'"))
            })?;
            let single = LabelMatrix::new(
                matrix.location_ids().to_vec(),
                vec![name.clone()],
                matrix.column(column),
            )?;
            Ok(majority_vote(&single))
        }
        EvalSource::Pseudo => {
            require_input(&cfg.paths.pseudo_labels, "pseudo-labels")?;
            let pseudo = read_pseudo_labels(&cfg.paths.pseudo_labels)?;
            Ok(binarize_all(&pseudo, threshold)?)
        }
        EvalSource::Student => {
            require_input(&cfg.paths.student, "student checkpoint")?;
            require_input(&cfg.paths.features, "feature store")?;
            let params = MlpParams::load(&cfg.paths.student)?;
            let features = read_feature_store(&cfg.paths.features)?;
            let distributions = params.forward_store(&features)?;
            let labels = distributions
                .iter()
                .map(|d| crate::metrics::binarize(d, threshold))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(GroundTruthSet::new(features.location_ids().to_vec(), labels)?)
        }
        EvalSource::Csv(path) => {
            require_input(path, "predictions csv")?;
            Ok(read_ground_truth(path)?)
        }
    }
}

/// Scores a predictions source against the reference ground truth, prints
/// the five-metric table and writes the JSON report.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    source: &EvalSource,
    reference_override: Option<&Path>,
    threshold_override: Option<f64>,
) -> Result<(), PipelineError> {
    let threshold = threshold_override.unwrap_or(cfg.eval.threshold);
    let reference_path = reference_override.unwrap_or(&cfg.paths.ground_truth);
    require_input(reference_path, "reference ground truth")?;
    let reference = read_ground_truth(reference_path)?;
    let preds = predictions_for(cfg, source, threshold)?;
    let cm = confusion(&preds, &reference)?;
    let report = compute_metrics(&cm)?;
    print!("{}", render_table(&[(source.label(), report)]));
    eprintln!(
        "eval: tp={} fp={} tn={} fn={}",
        cm.true_positive, cm.false_positive, cm.true_negative, cm.false_negative
    );
    ensure_out_dir(cfg)?;
    let json = serde_json::to_string(&report).expect("report serializes");
    crate::fsutil::write_atomic(&cfg.paths.metrics, json.as_bytes()).map_err(|e| {
        PipelineError::Config(format!("metrics {}: {e}", cfg.paths.metrics.display()))
    })?;
    Ok(())
}
