//! Brute-force oracles for small instances.

use crate::evolve::{EvolveError, ModelSpec};
use crate::treekit::PhyloTree;
use std::collections::BTreeMap;
use thiserror::Error;

/// Largest number of joint state assignments [`oracle_enumerate_small`]
/// will visit.
pub const MAX_STATES: u64 = 1 << 18;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{nodes} nodes with {states} states each exceed 2^18 assignments")]
    TooLarge { nodes: usize, states: usize },
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error("brute-force majority supports at most 4 levels, got {0}")]
    TooManyLevels(u32),
}

/// Exact joint distribution of leaf states.
///
/// Leaves are ordered by label; a pattern stores one state index per leaf
/// (CFN: 0 is `+1`, 1 is `−1`; JC: 0..4 for A, C, G, T).
#[derive(Debug, Clone, PartialEq)]
pub struct LeafDistribution {
    pub labels: Vec<u32>,
    pub probs: BTreeMap<Vec<u8>, f64>,
}

impl LeafDistribution {
    /// `E[σ_a σ_b]` under the ±1 reading of CFN states.
    pub fn correlation(&self, a: u32, b: u32) -> Option<f64> {
        let i = self.labels.iter().position(|&l| l == a)?;
        let j = self.labels.iter().position(|&l| l == b)?;
        let sign = |s: u8| if s == 0 { 1.0 } else { -1.0 };
        Some(self.probs.iter().map(|(pat, p)| p * sign(pat[i]) * sign(pat[j])).sum())
    }
}

/// Enumerates every state assignment to the nodes of `tree`, weighting each
/// by the root prior times the edge transition probabilities, and
/// marginalises onto the leaves.
pub fn oracle_enumerate_small(tree: &PhyloTree, model: ModelSpec) -> Result<LeafDistribution, OracleError> {
    let s = model.n_states();
    let nodes = tree.n_nodes();
    let total = (s as u64).checked_pow(nodes as u32).filter(|&t| t <= MAX_STATES);
    let Some(total) = total else {
        return Err(OracleError::TooLarge { nodes, states: s });
    };
    let lay = tree.rooted_layout();
    let mut edges = Vec::new();
    for &c in &lay.preorder {
        if let Some(p) = lay.parent[c] {
            edges.push((p, c, model.transition_matrix(lay.parent_len[c])?));
        }
    }
    let mut leaves: Vec<(u32, usize)> = tree.leaves().iter().map(|&x| (tree.label(x).unwrap(), x)).collect();
    leaves.sort();
    let prior = 1.0 / s as f64;
    let mut probs = BTreeMap::new();
    let mut state = vec![0usize; nodes];
    for code in 0..total {
        let mut c = code;
        for st in state.iter_mut() {
            *st = (c % s as u64) as usize;
            c /= s as u64;
        }
        let p = edges.iter().fold(prior, |acc, (a, b, m)| acc * m[state[*a]][state[*b]]);
        let pattern: Vec<u8> = leaves.iter().map(|&(_, x)| state[x] as u8).collect();
        *probs.entry(pattern).or_insert(0.0) += p;
    }
    Ok(LeafDistribution { labels: leaves.into_iter().map(|(l, _)| l).collect(), probs })
}

/// Correlation of a single fair-tie majority over the `2^levels` leaves of
/// a complete binary tree, every edge with correlation `theta` and every
/// leaf observed through extra noise `eta`, by enumerating all leaf
/// configurations.
pub fn brute_force_maj_correlation(levels: u32, theta: f64, eta: f64) -> Result<f64, OracleError> {
    if levels > 4 {
        return Err(OracleError::TooManyLevels(levels));
    }
    let n_leaves = 1usize << levels;
    let keep = |c: f64| (1.0 + c) / 2.0;
    let mut total = 0.0;
    for config in 0u32..(1 << n_leaves) {
        // P(config | root = +1) by pruning over the heap-ordered tree
        let n_nodes = 2 * n_leaves - 1;
        let mut like = vec![[0.0f64; 2]; n_nodes];
        for x in (0..n_nodes).rev() {
            if x >= n_leaves - 1 {
                let bit = (config >> (x - (n_leaves - 1))) & 1;
                like[x] = if bit == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
                continue;
            }
            for s in 0..2 {
                let mut prod = 1.0;
                for c in [2 * x + 1, 2 * x + 2] {
                    let corr = if c >= n_leaves - 1 { theta * eta } else { theta };
                    prod *= keep(corr) * like[c][s] + (1.0 - keep(corr)) * like[c][1 - s];
                }
                like[x][s] = prod;
            }
        }
        let plus = n_leaves as i32 - 2 * config.count_ones() as i32;
        total += like[0][0] * f64::from(plus.signum());
    }
    Ok(total)
}
