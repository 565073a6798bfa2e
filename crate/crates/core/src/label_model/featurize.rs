//! Factor vector for one (votes row, class) pair.

use crate::data::{ClassLabel, WeakLabel};

use super::CorrelationSet;

/// Evaluates the three indicator families for one row and candidate class.
///
/// Layout: `[lab_1..lab_m, acc_1..acc_m, corr_1..corr_|C|]`.
/// An accuracy entry fires only when the LF voted (non-abstain) and its vote
/// equals `y`. An agreement entry fires whenever the two votes are equal,
/// including the case where both LFs abstained.
pub fn featurize(votes: &[WeakLabel], y: ClassLabel, correlations: &CorrelationSet) -> Vec<f64> {
    let m = votes.len();
    let mut phi = vec![0.0; 2 * m + correlations.len()];
    let y_vote = y.to_weak();
    for (j, &vote) in votes.iter().enumerate() {
        if !vote.is_abstain() {
            phi[j] = 1.0;
        }
        if vote == y_vote {
            phi[m + j] = 1.0;
        }
    }
    for (c, &(j, d)) in correlations.pairs().iter().enumerate() {
        if votes[j] == votes[d] {
            phi[2 * m + c] = 1.0;
        }
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abstain_contributes_nothing() {
        let phi = featurize(
            &[WeakLabel::Abstain],
            ClassLabel::Positive,
            &CorrelationSet::empty(),
        );
        assert_eq!(phi, vec![0.0, 0.0]);
    }

    #[test]
    fn mixed_votes_with_correlation() {
        let c = CorrelationSet::new(vec![(0, 1)]).unwrap();
        let phi = featurize(
            &[WeakLabel::Positive, WeakLabel::Negative],
            ClassLabel::Positive,
            &c,
        );
        assert_eq!(phi, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn double_abstain_counts_as_agreement() {
        let c = CorrelationSet::new(vec![(0, 1)]).unwrap();
        let phi = featurize(
            &[WeakLabel::Abstain, WeakLabel::Abstain],
            ClassLabel::Negative,
            &c,
        );
        assert_eq!(phi, vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }
}
