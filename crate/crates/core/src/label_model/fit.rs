//! Full-batch fitting of the label model.

use crate::data::LabelMatrix;
use crate::optim::Adam;

use super::objective::{nll, nll_and_gradient};
use super::{FactorWeights, LabelModelConfig, LabelModelError, TrainedLabelModel};

/// Minimizes the negative log marginal likelihood with Adam for
/// `config.epochs` full-batch steps.
///
/// Weights start at `w_lab = 0`, `w_corr = 0`, `w_acc = 1`: the joint is
/// symmetric under a global label flip, and the positive accuracy
/// initialization pins the solution to the "labelers beat chance" branch.
/// The procedure is deterministic given (matrix, config).
pub fn fit(
    matrix: &LabelMatrix,
    config: &LabelModelConfig,
) -> Result<TrainedLabelModel, LabelModelError> {
    config.validate()?;
    if matrix.n_locations() == 0 {
        return Err(LabelModelError::EmptyMatrix);
    }
    let m = matrix.n_lfs();
    config.correlations.validate_for(m)?;
    if matrix.rows().all(|row| row.iter().all(|v| v.is_abstain())) {
        return Err(LabelModelError::NoSignal);
    }

    let n_corr = config.correlations.len();
    let mut flat = vec![0.0; 2 * m + n_corr];
    flat[m..2 * m].fill(1.0);

    let mut adam = Adam::new(flat.len(), config.learning_rate);
    for _ in 0..config.epochs {
        let w = FactorWeights::from_flat(&flat, m, n_corr);
        let (_, gradient) = nll_and_gradient(
            &w,
            matrix,
            &config.correlations,
            config.max_component_size,
        )?;
        adam.step(&mut flat, &gradient);
    }

    let weights = FactorWeights::from_flat(&flat, m, n_corr);
    let final_nll = nll(
        &weights,
        matrix,
        &config.correlations,
        config.max_component_size,
    )?;
    Ok(TrainedLabelModel {
        lf_names: matrix.lf_names().to_vec(),
        weights,
        correlations: config.correlations.clone(),
        final_nll,
    })
}
