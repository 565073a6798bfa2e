//! Minibatch training of the student on probabilistic pseudo-labels.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ClassDistribution, FeatureStore, PseudoLabelSet};
use crate::optim::Adam;

use super::net::loss_gradient;
use super::{MlpConfig, MlpParams, StudentError, TrainingConfig};

/// Trained parameters plus the per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainedStudent {
    pub params: MlpParams,
    pub epoch_losses: Vec<f64>,
}

/// Trains the MLP with Adam on the noise-aware loss. Deterministic given the
/// two seeds: parameter initialization comes from `mlp.seed` and the
/// per-epoch shuffle from `training.seed`.
pub fn train_student(
    features: &FeatureStore,
    targets: &PseudoLabelSet,
    mlp: &MlpConfig,
    training: &TrainingConfig,
) -> Result<TrainedStudent, StudentError> {
    mlp.validate()?;
    training.validate()?;
    if features.len() != targets.len() {
        return Err(StudentError::LengthMismatch {
            left: features.len(),
            right: targets.len(),
        });
    }
    if features.is_empty() {
        return Err(StudentError::EmptyBatch);
    }
    for (index, (left, right)) in features
        .location_ids()
        .iter()
        .zip(targets.location_ids())
        .enumerate()
    {
        if left != right {
            return Err(StudentError::IdMisalignment {
                index,
                left: left.to_string(),
                right: right.to_string(),
            });
        }
    }
    let width = features.n_images() * features.dim();
    if width != mlp.layer_dims[0] {
        return Err(StudentError::InputDimMismatch {
            expected: mlp.layer_dims[0],
            found: width,
        });
    }

    let inputs: Vec<Vec<f64>> = (0..features.len())
        .map(|k| {
            features
                .location_features(k)
                .iter()
                .map(|&v| v as f64)
                .collect()
        })
        .collect();
    let dists: Vec<ClassDistribution> = targets.distributions().to_vec();

    let mut params = MlpParams::init(mlp)?;
    let mut adam = Adam::new(params.flat().len(), training.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(training.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(training.epochs);

    for _ in 0..training.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(training.batch_size) {
            let batch: Vec<(&[f64], ClassDistribution)> = chunk
                .iter()
                .map(|&k| (inputs[k].as_slice(), dists[k]))
                .collect();
            let (loss, grads) = loss_gradient(&params, &batch)?;
            epoch_loss += loss * chunk.len() as f64;
            adam.step(params.flat_mut(), grads.flat());
        }
        epoch_losses.push(epoch_loss / inputs.len() as f64);
    }

    Ok(TrainedStudent {
        params,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassLabel, LocationId};
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Gaussian blobs at +/- delta per coordinate, one-hot or soft targets.
    fn blob_data(
        k: usize,
        dim: usize,
        delta: f64,
        seed: u64,
    ) -> (FeatureStore, PseudoLabelSet, Vec<ClassLabel>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(k * dim);
        let mut labels = Vec::with_capacity(k);
        for _ in 0..k {
            let positive = rng.random::<f64>() < 0.5;
            labels.push(if positive {
                ClassLabel::Positive
            } else {
                ClassLabel::Negative
            });
            let mean = if positive { delta } else { -delta };
            for _ in 0..dim {
                let noise: f64 = rng.sample(StandardNormal);
                values.push((mean + noise) as f32);
            }
        }
        let ids: Vec<LocationId> = (0..k)
            .map(|i| LocationId::new(format!("b{i}")).unwrap())
            .collect();
        let store = FeatureStore::new(ids.clone(), 1, dim, values).unwrap();
        let dists = labels.iter().map(|&l| ClassDistribution::certain(l)).collect();
        let targets = PseudoLabelSet::new(ids, dists).unwrap();
        (store, targets, labels)
    }

    fn train_accuracy(params: &MlpParams, store: &FeatureStore, labels: &[ClassLabel]) -> f64 {
        let preds = params.forward_store(store).unwrap();
        let hits = preds
            .iter()
            .zip(labels)
            .filter(|(d, &l)| (d.p_pos() >= 0.5) == (l == ClassLabel::Positive))
            .count();
        hits as f64 / labels.len() as f64
    }

    #[test]
    fn separable_data_reaches_high_accuracy() {
        let (store, targets, labels) = blob_data(400, 6, 1.0, 8);
        let mlp = MlpConfig {
            layer_dims: vec![6, 2],
            seed: 1,
        };
        let training = TrainingConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-2,
            seed: 2,
        };
        let trained = train_student(&store, &targets, &mlp, &training).unwrap();
        assert!(
            train_accuracy(&trained.params, &store, &labels) >= 0.99,
            "accuracy {}",
            train_accuracy(&trained.params, &store, &labels)
        );
        assert!(trained.epoch_losses.last().unwrap() <= trained.epoch_losses.first().unwrap());
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let (store, targets, _) = blob_data(100, 4, 0.5, 3);
        let mlp = MlpConfig {
            layer_dims: vec![4, 3, 2],
            seed: 7,
        };
        let training = TrainingConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 9,
        };
        let a = train_student(&store, &targets, &mlp, &training).unwrap();
        let b = train_student(&store, &targets, &mlp, &training).unwrap();
        for (x, y) in a.params.flat().iter().zip(b.params.flat()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn uniform_targets_drive_uniform_outputs() {
        let (store, _, _) = blob_data(300, 4, 1.0, 5);
        let uniform = PseudoLabelSet::new(
            store.location_ids().to_vec(),
            vec![ClassDistribution::uniform(); store.len()],
        )
        .unwrap();
        let mlp = MlpConfig {
            layer_dims: vec![4, 2],
            seed: 4,
        };
        let training = TrainingConfig {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-2,
            seed: 6,
        };
        let trained = train_student(&store, &uniform, &mlp, &training).unwrap();
        let preds = trained.params.forward_store(&store).unwrap();
        let mean_dev = preds
            .iter()
            .map(|d| (d.p_pos() - 0.5).abs())
            .sum::<f64>()
            / preds.len() as f64;
        assert!(mean_dev <= 0.05, "mean deviation {mean_dev}");
    }

    #[test]
    fn alignment_and_shape_errors() {
        let (store, targets, _) = blob_data(10, 4, 0.5, 1);
        let mut ids = store.location_ids().to_vec();
        ids.swap(0, 1);
        let swapped = PseudoLabelSet::new(ids, targets.distributions().to_vec()).unwrap();
        let mlp = MlpConfig {
            layer_dims: vec![4, 2],
            seed: 0,
        };
        let training = TrainingConfig {
            epochs: 1,
            batch_size: 4,
            learning_rate: 1e-3,
            seed: 0,
        };
        assert!(matches!(
            train_student(&store, &swapped, &mlp, &training),
            Err(StudentError::IdMisalignment { index: 0, .. })
        ));
        let wrong_width = MlpConfig {
            layer_dims: vec![5, 2],
            seed: 0,
        };
        assert!(matches!(
            train_student(&store, &targets, &wrong_width, &training),
            Err(StudentError::InputDimMismatch {
                expected: 5,
                found: 4
            })
        ));
        let bad_batch = TrainingConfig {
            batch_size: 0,
            ..training
        };
        assert!(matches!(
            train_student(&store, &targets, &mlp, &bad_batch),
            Err(StudentError::ZeroBatchSize)
        ));
    }
}
