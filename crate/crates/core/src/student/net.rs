//! Noise-aware loss and backpropagation.

use crate::data::ClassDistribution;

use super::{softmax2, MlpParams, StudentError};

/// KL divergence of the prediction from the probabilistic target,
/// `sum_c t_c (ln t_c - ln p_c)` in natural log with `0 ln 0 = 0`.
///
/// Dropping the target-entropy term would give the expected cross-entropy;
/// the full form is kept so the loss is exactly zero at `pred == target`.
/// A zero predicted probability under a nonzero target yields `inf`.
pub fn noise_aware_loss(pred: &ClassDistribution, target: &ClassDistribution) -> f64 {
    fn term(t: f64, p: f64) -> f64 {
        if t == 0.0 {
            0.0
        } else {
            t * (t.ln() - p.ln())
        }
    }
    term(target.p_neg(), pred.p_neg()) + term(target.p_pos(), pred.p_pos())
}

/// Parameter-shaped gradients, laid out exactly like [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub(crate) flat: Vec<f64>,
}

impl MlpGradients {
    pub fn flat(&self) -> &[f64] {
        &self.flat
    }
}

/// Mean noise-aware loss over the batch and its gradient by backpropagation.
///
/// For the softmax output layer the logit gradient of the mean loss is
/// `(p - t) / batch_size` per sample, which stays finite even when the loss
/// itself overflows to `inf`.
pub fn loss_gradient(
    params: &MlpParams,
    batch: &[(&[f64], ClassDistribution)],
) -> Result<(f64, MlpGradients), StudentError> {
    if batch.is_empty() {
        return Err(StudentError::EmptyBatch);
    }
    let n_layers = params.n_layers();
    let mut grads = MlpGradients {
        flat: vec![0.0; params.flat().len()],
    };
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;

    for &(input, target) in batch {
        if input.len() != params.input_dim() {
            return Err(StudentError::InputDimMismatch {
                expected: params.input_dim(),
                found: input.len(),
            });
        }
        // Forward, keeping each layer's input activation.
        let mut activations: Vec<Vec<f64>> = vec![input.to_vec()];
        for index in 0..n_layers {
            let layer = params.layer(index);
            let prev = &activations[index];
            let mut next = vec![0.0; layer.rows];
            for (i, out) in next.iter_mut().enumerate() {
                let row = &layer.weights[i * layer.cols..(i + 1) * layer.cols];
                let mut z = layer.bias[i];
                for (w, x) in row.iter().zip(prev) {
                    z += w * x;
                }
                *out = z;
            }
            if index + 1 < n_layers {
                for z in &mut next {
                    *z = z.max(0.0);
                }
            }
            activations.push(next);
        }

        let logits = [activations[n_layers][0], activations[n_layers][1]];
        let probs = softmax2(logits);
        let pred = ClassDistribution::new(probs[0], probs[1]).expect("softmax is normalized");
        loss += noise_aware_loss(&pred, &target) * scale;

        let mut delta = vec![
            (probs[0] - target.p_neg()) * scale,
            (probs[1] - target.p_pos()) * scale,
        ];
        // Backward pass; flat gradient offsets mirror the parameter layout.
        let mut offset = params.flat().len();
        for index in (0..n_layers).rev() {
            let layer = params.layer(index);
            offset -= layer.rows * layer.cols + layer.rows;
            let input_act = &activations[index];
            let (dw, db) = grads.flat[offset..offset + layer.rows * layer.cols + layer.rows]
                .split_at_mut(layer.rows * layer.cols);
            for (i, &d) in delta.iter().enumerate() {
                db[i] += d;
                let row = &mut dw[i * layer.cols..(i + 1) * layer.cols];
                for (slot, x) in row.iter_mut().zip(input_act) {
                    *slot += d * x;
                }
            }
            if index > 0 {
                let mut prev_delta = vec![0.0; layer.cols];
                for (i, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[i * layer.cols..(i + 1) * layer.cols];
                    for (slot, w) in prev_delta.iter_mut().zip(row) {
                        *slot += w * d;
                    }
                }
                // Rectifier derivative: inactive units pass nothing back.
                for (slot, &a) in prev_delta.iter_mut().zip(input_act) {
                    if a <= 0.0 {
                        *slot = 0.0;
                    }
                }
                delta = prev_delta;
            }
        }
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::data::ClassLabel;
    use crate::student::MlpConfig;

    fn dist(p_pos: f64) -> ClassDistribution {
        ClassDistribution::new(1.0 - p_pos, p_pos).unwrap()
    }

    #[test]
    fn loss_identities() {
        let p = dist(0.3);
        assert_eq!(noise_aware_loss(&p, &p), 0.0);
        let one_hot = ClassDistribution::certain(ClassLabel::Negative);
        let uniform = dist(0.5);
        assert_relative_eq!(
            noise_aware_loss(&uniform, &one_hot),
            2.0f64.ln(),
            max_relative = 1e-12
        );
        let skewed = ClassDistribution::new(0.9, 0.1).unwrap();
        assert_relative_eq!(
            noise_aware_loss(&skewed, &uniform),
            0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn one_hot_target_reduces_to_cross_entropy() {
        let pred = dist(0.73);
        let hot_pos = ClassDistribution::certain(ClassLabel::Positive);
        assert_eq!(
            noise_aware_loss(&pred, &hot_pos).to_bits(),
            (-pred.p_pos().ln()).to_bits()
        );
    }

    #[test]
    fn zero_prediction_under_mass_overflows() {
        let pred = ClassDistribution::certain(ClassLabel::Negative);
        let target = dist(0.4);
        assert!(noise_aware_loss(&pred, &target).is_infinite());
    }

    #[test]
    fn loss_nonnegative_and_zero_only_at_equality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = rng.random_range(1e-6..1.0 - 1e-6);
            let t = rng.random_range(1e-6..1.0 - 1e-6);
            let loss = noise_aware_loss(&dist(p), &dist(t));
            assert!(loss >= 0.0);
            if (p - t).abs() > 1e-6 {
                assert!(loss > 1e-12);
            }
        }
    }

    #[test]
    fn gradient_zero_when_prediction_equals_target() {
        let config = MlpConfig {
            layer_dims: vec![3, 2],
            seed: 5,
        };
        let params = MlpParams::init(&config).unwrap();
        let input = vec![0.2, -0.4, 1.0];
        let target = params.forward(&input).unwrap();
        let (loss, grads) = loss_gradient(&params, &[(&input, target)]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.flat.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn one_hot_gradient_matches_hand_coded_cross_entropy() {
        // Independent oracle for a single linear layer: with L = -ln p_c and
        // p = softmax(Wx + b), dL/dz = p - onehot, dW = outer(dz, x), db = dz.
        let config = MlpConfig {
            layer_dims: vec![4, 2],
            seed: 11,
        };
        let params = MlpParams::init(&config).unwrap();
        let inputs = [
            vec![0.5, -1.0, 2.0, 0.1],
            vec![1.5, 0.3, -0.2, -0.9],
        ];
        let targets = [
            ClassDistribution::certain(ClassLabel::Positive),
            ClassDistribution::certain(ClassLabel::Negative),
        ];
        let batch: Vec<(&[f64], ClassDistribution)> = inputs
            .iter()
            .map(|x| x.as_slice())
            .zip(targets.iter().copied())
            .collect();
        let (_, grads) = loss_gradient(&params, &batch).unwrap();

        let mut expected = vec![0.0; params.flat().len()];
        for (x, t) in inputs.iter().zip(&targets) {
            let layer = params.layer(0);
            let mut z = [layer.bias[0], layer.bias[1]];
            for (c, slot) in z.iter_mut().enumerate() {
                for (w, v) in layer.weights[c * 4..(c + 1) * 4].iter().zip(x) {
                    *slot += w * v;
                }
            }
            let p = softmax2(z);
            let dz = [
                (p[0] - t.p_neg()) / inputs.len() as f64,
                (p[1] - t.p_pos()) / inputs.len() as f64,
            ];
            for c in 0..2 {
                for (j, v) in x.iter().enumerate() {
                    expected[c * 4 + j] += dz[c] * v;
                }
                expected[8 + c] += dz[c];
            }
        }
        for (a, b) in grads.flat.iter().zip(&expected) {
            assert_relative_eq!(a, b, epsilon = 1e-14);
        }
    }

    /// Finite-difference check helper shared with the acceptance suite logic.
    fn fd_check(params: &MlpParams, batch: &[(&[f64], ClassDistribution)]) {
        let (_, grads) = loss_gradient(params, batch).unwrap();
        let h = 1e-4;
        for t in 0..params.flat().len() {
            let mut plus = params.clone();
            plus.flat_mut()[t] += h;
            let mut minus = params.clone();
            minus.flat_mut()[t] -= h;
            let (lp, _) = loss_gradient(&plus, batch).unwrap();
            let (lm, _) = loss_gradient(&minus, batch).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = grads.flat[t].abs().max(fd.abs()).max(1.0);
            assert!(
                (grads.flat[t] - fd).abs() / denom <= 1e-4,
                "param {t}: analytic {} vs fd {fd}",
                grads.flat[t]
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..5 {
            let config = MlpConfig {
                layer_dims: vec![3, 2],
                seed: case,
            };
            let params = MlpParams::init(&config).unwrap();
            let inputs: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let batch: Vec<(&[f64], ClassDistribution)> = inputs
                .iter()
                .map(|x| {
                    let t = rng.random_range(0.05..0.95);
                    (x.as_slice(), dist(t))
                })
                .collect();
            fd_check(&params, &batch);
        }
    }
}
