//! Negative log marginal likelihood of a vote matrix and its analytic
//! gradient.
//!
//! Rows are independent, so the class marginal factorizes per location:
//! nll = -sum_k log(sum_y exp(w . phi(row_k, y))) + K * log Z. The gradient is
//! the exponential-family identity: K times the model expectation of the
//! factor vector minus the summed per-row conditional expectations.
//!
//! Rows are grouped by vote pattern before summation (there are at most 3^m
//! distinct patterns), and pattern order is fixed so results are reproducible.

use std::collections::BTreeMap;

use crate::data::{ClassLabel, LabelMatrix, WeakLabel};

use super::partition::{log_partition, model_tables};
use super::{featurize, CorrelationSet, FactorWeights, LabelModelError};

fn check_matrix(matrix: &LabelMatrix, w: &FactorWeights) -> Result<(), LabelModelError> {
    if matrix.n_locations() == 0 {
        return Err(LabelModelError::EmptyMatrix);
    }
    if matrix.n_lfs() != w.n_lfs() {
        return Err(LabelModelError::ColumnCountMismatch {
            matrix: matrix.n_lfs(),
            model: w.n_lfs(),
        });
    }
    Ok(())
}

fn group_rows(matrix: &LabelMatrix) -> BTreeMap<Vec<WeakLabel>, usize> {
    let mut groups = BTreeMap::new();
    for row in matrix.rows() {
        *groups.entry(row.to_vec()).or_insert(0) += 1;
    }
    groups
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let max = a.max(b);
    max + ((a - max).exp() + (b - max).exp()).ln()
}

pub fn nll(
    w: &FactorWeights,
    matrix: &LabelMatrix,
    correlations: &CorrelationSet,
    max_component_size: usize,
) -> Result<f64, LabelModelError> {
    check_matrix(matrix, w)?;
    let log_z = log_partition(w, correlations, max_component_size)?;
    let flat = w.flatten();
    let mut total = 0.0;
    for (pattern, count) in group_rows(matrix) {
        let score = |y| {
            let phi = featurize(&pattern, y, correlations);
            flat.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>()
        };
        let marginal = log_add_exp(score(ClassLabel::Negative), score(ClassLabel::Positive));
        total -= count as f64 * marginal;
    }
    Ok(total + matrix.n_locations() as f64 * log_z)
}

pub fn nll_gradient(
    w: &FactorWeights,
    matrix: &LabelMatrix,
    correlations: &CorrelationSet,
    max_component_size: usize,
) -> Result<Vec<f64>, LabelModelError> {
    nll_and_gradient(w, matrix, correlations, max_component_size).map(|(_, g)| g)
}

pub(crate) fn nll_and_gradient(
    w: &FactorWeights,
    matrix: &LabelMatrix,
    correlations: &CorrelationSet,
    max_component_size: usize,
) -> Result<(f64, Vec<f64>), LabelModelError> {
    check_matrix(matrix, w)?;
    let tables = model_tables(w, correlations, max_component_size)?;
    let flat = w.flatten();
    let k = matrix.n_locations() as f64;

    let mut value = 0.0;
    let mut gradient: Vec<f64> = tables.expectation.iter().map(|e| k * e).collect();
    for (pattern, count) in group_rows(matrix) {
        let count = count as f64;
        let phi_neg = featurize(&pattern, ClassLabel::Negative, correlations);
        let phi_pos = featurize(&pattern, ClassLabel::Positive, correlations);
        let dot = |phi: &[f64]| flat.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
        let s_neg = dot(&phi_neg);
        let s_pos = dot(&phi_pos);
        let marginal = log_add_exp(s_neg, s_pos);
        value -= count * marginal;
        let p_neg = (s_neg - marginal).exp();
        let p_pos = (s_pos - marginal).exp();
        for t in 0..gradient.len() {
            gradient[t] -= count * (p_neg * phi_neg[t] + p_pos * phi_pos[t]);
        }
    }
    Ok((value + k * tables.log_z, gradient))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabelMatrix, LocationId};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix_from_rows(rows: Vec<Vec<WeakLabel>>) -> LabelMatrix {
        let m = rows[0].len();
        let ids = (0..rows.len())
            .map(|i| LocationId::new(format!("loc{i}")).unwrap())
            .collect();
        let names = (0..m).map(|j| format!("lf{j}")).collect();
        LabelMatrix::new(ids, names, rows.into_iter().flatten().collect()).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, k: usize, m: usize) -> LabelMatrix {
        let rows = (0..k)
            .map(|_| {
                (0..m)
                    .map(|_| match rng.random_range(0..3) {
                        0 => WeakLabel::Abstain,
                        1 => WeakLabel::Negative,
                        _ => WeakLabel::Positive,
                    })
                    .collect()
            })
            .collect();
        matrix_from_rows(rows)
    }

    #[test]
    fn single_abstain_row_at_zero_weights() {
        let matrix = matrix_from_rows(vec![vec![WeakLabel::Abstain]]);
        let w = FactorWeights::zeros(1, 0);
        let value = nll(&w, &matrix, &CorrelationSet::empty(), 12).unwrap();
        assert_relative_eq!(value, 3.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn zero_weights_closed_form() {
        // At w = 0 every row contributes m*ln(3) regardless of its votes.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(k, m) in &[(1usize, 1usize), (7, 2), (20, 4)] {
            let matrix = random_matrix(&mut rng, k, m);
            let w = FactorWeights::zeros(m, 0);
            let value = nll(&w, &matrix, &CorrelationSet::empty(), 12).unwrap();
            assert_relative_eq!(
                value,
                (k * m) as f64 * 3.0f64.ln(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn duplicating_rows_doubles_nll() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let matrix = random_matrix(&mut rng, 15, 3);
        let mut doubled_rows: Vec<Vec<WeakLabel>> =
            matrix.rows().map(|r| r.to_vec()).collect();
        doubled_rows.extend(matrix.rows().map(|r| r.to_vec()));
        let ids = (0..30)
            .map(|i| LocationId::new(format!("d{i}")).unwrap())
            .collect();
        let doubled = LabelMatrix::new(
            ids,
            matrix.lf_names().to_vec(),
            doubled_rows.into_iter().flatten().collect(),
        )
        .unwrap();
        let w = FactorWeights {
            w_lab: vec![0.3, -0.2, 0.1],
            w_acc: vec![1.1, 0.8, 0.4],
            w_corr: vec![],
        };
        let one = nll(&w, &matrix, &CorrelationSet::empty(), 12).unwrap();
        let two = nll(&w, &doubled, &CorrelationSet::empty(), 12).unwrap();
        assert_relative_eq!(two, 2.0 * one, max_relative = 1e-12);
    }

    fn fd_gradient(
        flat: &[f64],
        m: usize,
        matrix: &LabelMatrix,
        correlations: &CorrelationSet,
        h: f64,
    ) -> Vec<f64> {
        (0..flat.len())
            .map(|t| {
                let mut plus = flat.to_vec();
                plus[t] += h;
                let mut minus = flat.to_vec();
                minus[t] -= h;
                let n_corr = correlations.len();
                let up = nll(
                    &FactorWeights::from_flat(&plus, m, n_corr),
                    matrix,
                    correlations,
                    12,
                )
                .unwrap();
                let down = nll(
                    &FactorWeights::from_flat(&minus, m, n_corr),
                    matrix,
                    correlations,
                    12,
                )
                .unwrap();
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let correlations = CorrelationSet::new(vec![(0, 1)]).unwrap();
        for _ in 0..10 {
            let matrix = random_matrix(&mut rng, 50, 3);
            let flat: Vec<f64> = (0..7).map(|_| rng.random_range(-1.5..1.5)).collect();
            let w = FactorWeights::from_flat(&flat, 3, 1);
            let analytic = nll_gradient(&w, &matrix, &correlations, 12).unwrap();
            let numeric = fd_gradient(&flat, 3, &matrix, &correlations, 1e-5);
            for (a, n) in analytic.iter().zip(&numeric) {
                let denom = a.abs().max(n.abs()).max(1.0);
                assert!(
                    (a - n).abs() / denom <= 1e-4,
                    "analytic {a} vs numeric {n}"
                );
            }
        }
    }

    #[test]
    fn abstain_row_gradient_equals_model_expectation() {
        // With a single all-abstain row the conditional expectation of every
        // lab/acc factor is zero, so those gradient entries reduce to
        // K * (model expectation) with K = 1.
        let matrix = matrix_from_rows(vec![vec![WeakLabel::Abstain, WeakLabel::Abstain]]);
        let w = FactorWeights {
            w_lab: vec![0.4, -0.3],
            w_acc: vec![0.9, 1.2],
            w_corr: vec![],
        };
        let correlations = CorrelationSet::empty();
        let gradient = nll_gradient(&w, &matrix, &correlations, 12).unwrap();
        let expectation = model_tables(&w, &correlations, 12).unwrap().expectation;
        for t in 0..4 {
            assert_relative_eq!(gradient[t], expectation[t], max_relative = 1e-12);
        }
    }

    #[test]
    fn empty_matrix_rejected() {
        let matrix = LabelMatrix::new(vec![], vec!["a".into()], vec![]).unwrap();
        let w = FactorWeights::zeros(1, 0);
        assert!(matches!(
            nll(&w, &matrix, &CorrelationSet::empty(), 12),
            Err(LabelModelError::EmptyMatrix)
        ));
    }
}
