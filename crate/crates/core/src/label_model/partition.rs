//! Exact normalization constant and model expectations.
//!
//! The joint score of a (votes, class) pair decomposes over connected
//! components of the correlation graph once the class is fixed, so the sum
//! over all vote configurations factorizes: LFs outside every correlation
//! pair contribute a closed-form three-term sum, and each correlated
//! component of size s is enumerated over its 3^s vote configurations.

use crate::data::{ClassLabel, WeakLabel};

use super::{featurize, CorrelationSet, FactorWeights, LabelModelError};

pub(crate) const BRUTE_FORCE_LF_LIMIT: usize = 8;

const VOTE_STATES: [WeakLabel; 3] = [WeakLabel::Abstain, WeakLabel::Negative, WeakLabel::Positive];
const CLASSES: [ClassLabel; 2] = [ClassLabel::Negative, ClassLabel::Positive];

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

enum Component {
    Singleton(usize),
    /// Sorted member LF indices plus the correlation pairs they close over,
    /// each pair carrying its index into the flat corr weight block.
    Enumerated {
        members: Vec<usize>,
        pairs: Vec<(usize, usize, usize)>,
    },
}

impl Component {
    fn size(&self) -> usize {
        match self {
            Component::Singleton(_) => 1,
            Component::Enumerated { members, .. } => members.len(),
        }
    }
}

/// Connected components of the correlation graph over LF indices `0..m`,
/// in ascending order of their smallest member.
fn build_components(m: usize, correlations: &CorrelationSet) -> Vec<Component> {
    let mut adjacency = vec![Vec::new(); m];
    for &(j, d) in correlations.pairs() {
        adjacency[j].push(d);
        adjacency[d].push(j);
    }
    let mut visited = vec![false; m];
    let mut components = Vec::new();
    for start in 0..m {
        if visited[start] {
            continue;
        }
        if adjacency[start].is_empty() {
            visited[start] = true;
            components.push(Component::Singleton(start));
            continue;
        }
        let mut members = Vec::new();
        let mut queue = vec![start];
        visited[start] = true;
        while let Some(node) = queue.pop() {
            members.push(node);
            for &next in &adjacency[node] {
                if !visited[next] {
                    visited[next] = true;
                    queue.push(next);
                }
            }
        }
        members.sort_unstable();
        let pairs = correlations
            .pairs()
            .iter()
            .enumerate()
            .filter(|(_, (j, _))| members.contains(j))
            .map(|(c, &(j, d))| (j, d, c))
            .collect();
        components.push(Component::Enumerated { members, pairs });
    }
    components
}

/// Per-class log sums for one component: the log of the summed exponentials
/// over the component's vote configurations, plus the same restricted to
/// configurations where each owned factor fires.
struct ComponentTable {
    log_sum: [f64; 2],
    factors: Vec<(usize, [f64; 2])>,
}

fn singleton_table(j: usize, w: &FactorWeights, m: usize) -> ComponentTable {
    let lab = w.w_lab[j];
    let acc = w.w_acc[j];
    // Abstain scores 0, voting the class scores lab+acc, voting against it
    // scores lab; identical for both classes.
    let log_sum = log_sum_exp(&[0.0, lab + acc, lab]);
    let log_lab = log_sum_exp(&[lab + acc, lab]);
    ComponentTable {
        log_sum: [log_sum, log_sum],
        factors: vec![(j, [log_lab, log_lab]), (m + j, [lab + acc, lab + acc])],
    }
}

fn enumerated_table(
    members: &[usize],
    pairs: &[(usize, usize, usize)],
    w: &FactorWeights,
    m: usize,
) -> ComponentTable {
    let size = members.len();
    let n_configs = 3usize.pow(size as u32);
    // Flat factor indices owned by this component, in a fixed order.
    let mut factor_ids = Vec::with_capacity(2 * size + pairs.len());
    for &j in members {
        factor_ids.push(j);
        factor_ids.push(m + j);
    }
    for &(_, _, c) in pairs {
        factor_ids.push(2 * m + c);
    }

    let position = |lf: usize| members.iter().position(|&x| x == lf).expect("member");
    let mut votes = vec![WeakLabel::Abstain; size];
    let exponent = |votes: &[WeakLabel], y: ClassLabel| {
        let y_vote = y.to_weak();
        let mut e = 0.0;
        for (p, &j) in members.iter().enumerate() {
            if !votes[p].is_abstain() {
                e += w.w_lab[j];
            }
            if votes[p] == y_vote {
                e += w.w_acc[j];
            }
        }
        for &(j, d, c) in pairs {
            if votes[position(j)] == votes[position(d)] {
                e += w.w_corr[c];
            }
        }
        e
    };

    let decode = |config: usize, votes: &mut [WeakLabel]| {
        let mut rest = config;
        for slot in votes.iter_mut() {
            *slot = VOTE_STATES[rest % 3];
            rest /= 3;
        }
    };

    // Pass 1: per-class maximum exponent for stable summation.
    let mut max_exp = [f64::NEG_INFINITY; 2];
    for config in 0..n_configs {
        decode(config, &mut votes);
        for (yi, &y) in CLASSES.iter().enumerate() {
            max_exp[yi] = max_exp[yi].max(exponent(&votes, y));
        }
    }

    // Pass 2: accumulate scaled sums, total and per owned factor.
    let mut total = [0.0f64; 2];
    let mut factor_totals = vec![[0.0f64; 2]; factor_ids.len()];
    for config in 0..n_configs {
        decode(config, &mut votes);
        for (yi, &y) in CLASSES.iter().enumerate() {
            let scaled = (exponent(&votes, y) - max_exp[yi]).exp();
            total[yi] += scaled;
            let y_vote = y.to_weak();
            for (p, _) in members.iter().enumerate() {
                if !votes[p].is_abstain() {
                    factor_totals[2 * p][yi] += scaled;
                }
                if votes[p] == y_vote {
                    factor_totals[2 * p + 1][yi] += scaled;
                }
            }
            for (pair_pos, &(j, d, _)) in pairs.iter().enumerate() {
                if votes[position(j)] == votes[position(d)] {
                    factor_totals[2 * size + pair_pos][yi] += scaled;
                }
            }
        }
    }

    let finish = |sums: [f64; 2]| [max_exp[0] + sums[0].ln(), max_exp[1] + sums[1].ln()];
    ComponentTable {
        log_sum: finish(total),
        factors: factor_ids
            .into_iter()
            .zip(factor_totals)
            .map(|(id, sums)| (id, finish(sums)))
            .collect(),
    }
}

fn component_tables(
    w: &FactorWeights,
    correlations: &CorrelationSet,
    max_component_size: usize,
) -> Result<Vec<ComponentTable>, LabelModelError> {
    w.validate(correlations)?;
    let m = w.n_lfs();
    let mut tables = Vec::new();
    for component in build_components(m, correlations) {
        if component.size() > max_component_size {
            return Err(LabelModelError::ComponentTooLarge {
                size: component.size(),
                limit: max_component_size,
            });
        }
        tables.push(match component {
            Component::Singleton(j) => singleton_table(j, w, m),
            Component::Enumerated { members, pairs } => enumerated_table(&members, &pairs, w, m),
        });
    }
    Ok(tables)
}

pub(crate) struct ModelTables {
    pub log_z: f64,
    /// Expectation of each factor under the model joint, flat layout.
    pub expectation: Vec<f64>,
}

pub(crate) fn log_partition(
    w: &FactorWeights,
    correlations: &CorrelationSet,
    max_component_size: usize,
) -> Result<f64, LabelModelError> {
    let tables = component_tables(w, correlations, max_component_size)?;
    let per_class: Vec<f64> = (0..2)
        .map(|yi| tables.iter().map(|t| t.log_sum[yi]).sum())
        .collect();
    Ok(log_sum_exp(&per_class))
}

pub(crate) fn model_tables(
    w: &FactorWeights,
    correlations: &CorrelationSet,
    max_component_size: usize,
) -> Result<ModelTables, LabelModelError> {
    let tables = component_tables(w, correlations, max_component_size)?;
    let total_log: Vec<f64> = (0..2)
        .map(|yi| tables.iter().map(|t| t.log_sum[yi]).sum())
        .collect();
    let log_z = log_sum_exp(&total_log);

    let mut expectation = vec![0.0; 2 * w.n_lfs() + correlations.len()];
    for table in &tables {
        for &(factor, log_fired) in &table.factors {
            for yi in 0..2 {
                expectation[factor] +=
                    (log_fired[yi] + total_log[yi] - table.log_sum[yi] - log_z).exp();
            }
        }
    }
    Ok(ModelTables { log_z, expectation })
}

/// Exact normalization constant: the sum of `exp(w . phi(votes, y))` over all
/// vote configurations and both classes.
pub fn partition_function(
    w: &FactorWeights,
    correlations: &CorrelationSet,
    max_component_size: usize,
) -> Result<f64, LabelModelError> {
    Ok(log_partition(w, correlations, max_component_size)?.exp())
}

/// Reference implementation by full enumeration; the testing oracle for
/// `partition_function`. Only feasible for small LF counts.
pub fn brute_force_partition(
    w: &FactorWeights,
    correlations: &CorrelationSet,
) -> Result<f64, LabelModelError> {
    w.validate(correlations)?;
    let m = w.n_lfs();
    if m > BRUTE_FORCE_LF_LIMIT {
        return Err(LabelModelError::BruteForceTooLarge {
            m,
            limit: BRUTE_FORCE_LF_LIMIT,
        });
    }
    let flat = w.flatten();
    let mut votes = vec![WeakLabel::Abstain; m];
    let mut total = 0.0;
    for config in 0..3usize.pow(m as u32) {
        let mut rest = config;
        for slot in votes.iter_mut() {
            *slot = VOTE_STATES[rest % 3];
            rest /= 3;
        }
        for &y in &CLASSES {
            let phi = featurize(&votes, y, correlations);
            let score: f64 = flat.iter().zip(&phi).map(|(a, b)| a * b).sum();
            total += score.exp();
        }
    }
    Ok(total)
}
