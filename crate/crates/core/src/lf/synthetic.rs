//! Synthetic labelers and the desk-scale benchmark generator.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    ClassLabel, DatasetManifest, FeatureStore, GroundTruthSet, ImageRef, LabelMatrix, LocationId,
    LocationRecord, WeakLabel,
};

use super::LfError;

/// One synthetic vote. Draws exactly two values from `rng` in a fixed order
/// (abstain gate first, then correctness), so callers can rely on a stable
/// stream position regardless of the outcome.
pub fn synthetic_label(
    true_label: ClassLabel,
    accuracy: f64,
    abstain_rate: f64,
    rng: &mut impl RngCore,
) -> WeakLabel {
    let abstain_draw: f64 = rng.random();
    let accuracy_draw: f64 = rng.random();
    if abstain_draw < abstain_rate {
        WeakLabel::Abstain
    } else if accuracy_draw < accuracy {
        true_label.to_weak()
    } else {
        true_label.flipped().to_weak()
    }
}

/// Each location gets its own child stream, so resuming a partial column
/// reproduces exactly what an uninterrupted run would have produced.
fn location_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub(crate) fn run_synthetic_column(
    manifest: &DatasetManifest,
    truth: &GroundTruthSet,
    accuracy: f64,
    abstain_rate: f64,
    seed: u64,
    completed: &BTreeMap<usize, WeakLabel>,
    on_result: &(dyn Fn(usize, WeakLabel) + Sync),
) -> Result<Vec<WeakLabel>, LfError> {
    if truth.len() != manifest.len() {
        return Err(LfError::TruthMisaligned { index: 0 });
    }
    for (index, (a, b)) in manifest
        .location_ids()
        .iter()
        .zip(truth.location_ids())
        .enumerate()
    {
        if a != b {
            return Err(LfError::TruthMisaligned { index });
        }
    }
    let mut column = Vec::with_capacity(manifest.len());
    for (index, &label) in truth.labels().iter().enumerate() {
        if let Some(&vote) = completed.get(&index) {
            column.push(vote);
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(location_seed(seed, index));
        let vote = synthetic_label(label, accuracy, abstain_rate, &mut rng);
        column.push(vote);
        on_result(index, vote);
    }
    Ok(column)
}

/// Generation parameters for a fully synthetic benchmark: class prior,
/// per-LF accuracy/abstain pairs, image and feature geometry, and the
/// per-coordinate class separation of the Gaussian features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkParams {
    pub locations: usize,
    pub class_prior: f64,
    pub lf_accuracies: Vec<f64>,
    pub lf_abstain_rates: Vec<f64>,
    pub images_per_location: usize,
    pub feature_dim: usize,
    pub class_separation: f64,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams {
            locations: 1000,
            class_prior: 0.5,
            lf_accuracies: vec![0.85, 0.75, 0.65],
            lf_abstain_rates: vec![0.1, 0.1, 0.1],
            images_per_location: 8,
            feature_dim: 16,
            class_separation: 0.5,
        }
    }
}

impl BenchmarkParams {
    fn validate(&self) -> Result<(), LfError> {
        let fail = |message: String| LfError::InvalidSpec {
            name: "benchmark".into(),
            message,
        };
        if self.locations == 0 {
            return Err(fail("locations must be at least 1".into()));
        }
        if self.lf_accuracies.is_empty() {
            return Err(fail("need at least one labeling function".into()));
        }
        if self.lf_accuracies.len() != self.lf_abstain_rates.len() {
            return Err(fail(format!(
                "{} accuracies but {} abstain rates",
                self.lf_accuracies.len(),
                self.lf_abstain_rates.len()
            )));
        }
        for &a in &self.lf_accuracies {
            if !(a > 0.0 && a <= 1.0) {
                return Err(fail(format!("accuracy {a} outside (0, 1]")));
            }
        }
        for &b in &self.lf_abstain_rates {
            if !(0.0..1.0).contains(&b) {
                return Err(fail(format!("abstain rate {b} outside [0, 1)")));
            }
        }
        if !(0.0..=1.0).contains(&self.class_prior) {
            return Err(fail(format!("class prior {} outside [0, 1]", self.class_prior)));
        }
        if !(self.class_separation.is_finite() && self.class_separation > 0.0) {
            return Err(fail(format!(
                "class separation {} must be positive",
                self.class_separation
            )));
        }
        if self.images_per_location == 0 || self.feature_dim == 0 {
            return Err(fail("image count and feature dim must be positive".into()));
        }
        Ok(())
    }
}

/// A complete id-aligned benchmark: manifest, vote matrix, features, truth.
#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub manifest: DatasetManifest,
    pub label_matrix: LabelMatrix,
    pub feature_store: FeatureStore,
    pub ground_truth: GroundTruthSet,
    pub params: BenchmarkParams,
}

/// Generates a benchmark deterministically from `seed`: the latent class is
/// Bernoulli(prior), LF votes are conditionally independent given the class,
/// and every feature coordinate is unit-variance Gaussian centered at plus
/// or minus the class separation.
pub fn generate_benchmark(
    params: &BenchmarkParams,
    seed: u64,
) -> Result<SyntheticBenchmark, LfError> {
    params.validate()?;
    let k = params.locations;
    let m = params.lf_accuracies.len();
    let n = params.images_per_location;
    let d = params.feature_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut records = Vec::with_capacity(k);
    let mut labels = Vec::with_capacity(k);
    let mut votes = Vec::with_capacity(k * m);
    let mut values = Vec::with_capacity(k * n * d);
    for index in 0..k {
        let id = LocationId::new(format!("loc{index:06}")).expect("generated id");
        let images = (0..n)
            .map(|img| ImageRef {
                path: format!("synthetic://{id}/img{img}"),
                gsd_cm: if img % 2 == 0 { 100.0 } else { 15.0 },
                year: 2010 + ((img * 13) / n.max(2).saturating_sub(1).max(1)) as i32,
            })
            .collect();
        records.push(LocationRecord {
            location_id: id,
            images,
        });

        let label = if rng.random::<f64>() < params.class_prior {
            ClassLabel::Positive
        } else {
            ClassLabel::Negative
        };
        labels.push(label);
        for j in 0..m {
            votes.push(synthetic_label(
                label,
                params.lf_accuracies[j],
                params.lf_abstain_rates[j],
                &mut rng,
            ));
        }
        let mean = match label {
            ClassLabel::Positive => params.class_separation,
            ClassLabel::Negative => -params.class_separation,
        };
        for _ in 0..n * d {
            let noise: f64 = rng.sample(StandardNormal);
            values.push((mean + noise) as f32);
        }
    }

    let manifest = DatasetManifest::new(records)?;
    let ids = manifest.location_ids();
    let lf_names = (0..m).map(|j| format!("lf{j}")).collect();
    Ok(SyntheticBenchmark {
        label_matrix: LabelMatrix::new(ids.clone(), lf_names, votes)?,
        feature_store: FeatureStore::new(ids.clone(), n, d, values)?,
        ground_truth: GroundTruthSet::new(ids, labels)?,
        manifest,
        params: params.clone(),
    })
}
