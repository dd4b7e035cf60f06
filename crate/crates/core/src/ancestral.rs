//! Recursive-majority ancestral reconstruction.
//!
//! The estimator completes a rooted subtree to a balanced binary tree whose
//! depth is a multiple of `ℓ`, copying each leaf's value down the added
//! zero-length edges, and then takes majorities `ℓ` levels at a time.  The
//! completed tree is never materialised: a leaf sitting `r < ℓ` levels below a
//! block root stands for `2^{ℓ−r}` identical completed leaves, so a block is a
//! weighted majority over its depth-`ℓ` frontier.  Sums are computed
//! bit-sliced, 64 sites per machine word.

use crate::evolve::{CharacterMatrix, THETA_STAR};
use crate::rng::{bit_mask, pair_key};
use crate::seq::BitSeq;
use crate::treekit::{NodeId, PhyloTree};
use rand::Rng;
use thiserror::Error;

/// Largest block depth searched by [`choose_level_parameter`]; the exact
/// recursion costs `O(4^ℓ)` per evaluation.
pub const MAX_LEVELS: u32 = 16;
/// Resolution of the scan over leaf noise levels.
const ETA_STEPS: u32 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AncestralError {
    #[error("no block depth ℓ ≤ {max} amplifies correlation at θ_min = {theta_min}")]
    NoAmplification { theta_min: f64, max: u32 },
    #[error("correlation {0} outside (0, 1]")]
    InvalidCorrelation(f64),
    #[error("levels must be at least 1")]
    ZeroLevels,
    #[error("sequences have different lengths")]
    LengthMismatch,
    #[error("ancestral reconstruction needs a ±1 matrix; reduce JC data first")]
    WrongAlphabet,
    #[error("tree must be rooted and binary")]
    NotRootedBinary,
    #[error("leaf label {0} missing from the matrix")]
    MissingLabel(u32),
}

/// Block depth and certified correlation of the recursive majority.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MajorityConfig {
    /// ℓ: levels per majority block.
    pub levels: u32,
    /// β: leaf noise level that the ℓ-level map keeps at or above itself.
    pub beta: f64,
    /// α: smallest observed gain MajCorr/η over the certified range.
    pub alpha: f64,
    /// Smallest edge correlation the certificate covers.
    pub theta_min: f64,
}

/// Majority of ±1 values with a fair tie break: `sign(Σ x + ω/2)`.
pub fn maj_hat<R: Rng + ?Sized>(values: &[i8], rng: &mut R) -> i8 {
    let sum: i64 = values.iter().map(|&v| v as i64).sum();
    let omega = if rng.random::<bool>() { 1 } else { -1 };
    if 2 * sum + omega > 0 {
        1
    } else {
        -1
    }
}

/// MajCorr on the balanced `levels`-level binary tree with correlation `theta`
/// on every edge and leaf noise `eta` (so leaf edges carry `theta · eta`).
///
/// Exact: the count of `+1` leaves given a `+1` root is propagated bottom-up
/// by convolution, using that the count distribution given a `−1` node is the
/// mirror image.
pub fn exact_maj_correlation(levels: u32, theta: f64, eta: f64) -> Result<f64, AncestralError> {
    if levels == 0 {
        return Err(AncestralError::ZeroLevels);
    }
    for x in [theta, eta] {
        if !(x > 0.0 && x <= 1.0) {
            return Err(AncestralError::InvalidCorrelation(x));
        }
    }
    // cur[c] = P(c plus-leaves below a node | node = +1)
    let mut cur = vec![0.0, 1.0];
    for level in (1..=levels).rev() {
        let t = if level == levels { theta * eta } else { theta };
        let n = cur.len() - 1;
        let keep = (1.0 + t) / 2.0;
        let flip = (1.0 - t) / 2.0;
        let m: Vec<f64> = (0..=n).map(|c| keep * cur[c] + flip * cur[n - c]).collect();
        let mut next = vec![0.0; 2 * n + 1];
        for (i, &a) in m.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in m.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        cur = next;
    }
    let n = cur.len() - 1;
    let (mut plus, mut minus) = (0.0, 0.0);
    for (c, &p) in cur.iter().enumerate() {
        match (2 * c).cmp(&n) {
            std::cmp::Ordering::Greater => plus += p,
            std::cmp::Ordering::Less => minus += p,
            std::cmp::Ordering::Equal => {}
        }
    }
    Ok(plus - minus)
}

/// Smallest block depth ℓ whose exact majority map keeps every grid noise
/// level η ∈ {0.001, 0.002, …} up to β at or above itself, at edge
/// correlation `theta_min`.
///
/// The scan stops at the first grid point that fails; β is the last point
/// that passed.  Certification is for uniform `theta_min`, relying on MajCorr
/// being nondecreasing in every edge and leaf correlation.
pub fn choose_level_parameter(theta_min: f64) -> Result<MajorityConfig, AncestralError> {
    if !(theta_min > 0.0 && theta_min <= 1.0) {
        return Err(AncestralError::InvalidCorrelation(theta_min));
    }
    if theta_min <= THETA_STAR {
        return Err(AncestralError::NoAmplification { theta_min, max: MAX_LEVELS });
    }
    for levels in 1..=MAX_LEVELS {
        let mut beta = 0.0;
        let mut alpha = f64::INFINITY;
        for i in 1..=ETA_STEPS {
            let eta = i as f64 / ETA_STEPS as f64;
            let corr = exact_maj_correlation(levels, theta_min, eta)?;
            if corr < eta - 1e-12 {
                break;
            }
            beta = eta;
            alpha = alpha.min(corr / eta);
        }
        if beta > 0.0 {
            return Ok(MajorityConfig { levels, beta, alpha, theta_min });
        }
    }
    Err(AncestralError::NoAmplification { theta_min, max: MAX_LEVELS })
}

/// Source of tie-breaking bits for one majority block.
pub trait TieBits {
    /// `k` bits for the block rooted at `block`; a set bit breaks ties to +1.
    fn mask(&self, block: NodeId, k: usize) -> Vec<u64>;
}

/// Tie bits from the keyed stream `(seed, (root, block))`, so the estimate
/// at a given root is reproducible regardless of evaluation order.
#[derive(Debug, Clone, Copy)]
pub struct KeyedTies {
    pub seed: u64,
    pub root: NodeId,
}

impl TieBits for KeyedTies {
    fn mask(&self, block: NodeId, k: usize) -> Vec<u64> {
        bit_mask(self.seed, pair_key(self.root as u64, block as u64), k)
    }
}

impl<F: Fn(NodeId, usize) -> Vec<u64>> TieBits for F {
    fn mask(&self, block: NodeId, k: usize) -> Vec<u64> {
        self(block, k)
    }
}

/// Recursive-majority estimate of the sequence at `root`.
///
/// `children(x)` returns the two children of an internal node and `None` for
/// a leaf; `leaf_seq(x)` gives the observed sequence at a leaf.
pub fn anc_estimate<'a, C, L>(
    root: NodeId,
    children: &C,
    leaf_seq: &L,
    levels: u32,
    ties: &dyn TieBits,
) -> Result<BitSeq, AncestralError>
where
    C: Fn(NodeId) -> Option<[NodeId; 2]>,
    L: Fn(NodeId) -> &'a BitSeq,
{
    if levels == 0 {
        return Err(AncestralError::ZeroLevels);
    }
    let k = first_leaf_len(root, children, leaf_seq);
    block_value(root, children, leaf_seq, levels as usize, k, ties)
}

fn first_leaf_len<'a, C, L>(mut x: NodeId, children: &C, leaf_seq: &L) -> usize
where
    C: Fn(NodeId) -> Option<[NodeId; 2]>,
    L: Fn(NodeId) -> &'a BitSeq,
{
    while let Some([a, _]) = children(x) {
        x = a;
    }
    leaf_seq(x).len()
}

fn block_value<'a, C, L>(
    x: NodeId,
    children: &C,
    leaf_seq: &L,
    levels: usize,
    k: usize,
    ties: &dyn TieBits,
) -> Result<BitSeq, AncestralError>
where
    C: Fn(NodeId) -> Option<[NodeId; 2]>,
    L: Fn(NodeId) -> &'a BitSeq,
{
    if children(x).is_none() {
        return Ok(leaf_seq(x).clone());
    }
    // frontier members with their weight exponent ℓ − depth
    let mut frontier: Vec<(NodeId, usize)> = Vec::new();
    let mut layer = vec![x];
    for depth in 1..=levels {
        let mut next = Vec::with_capacity(layer.len() * 2);
        for &y in &layer {
            if let Some([a, b]) = children(y) {
                for c in [a, b] {
                    if depth == levels || children(c).is_none() {
                        frontier.push((c, levels - depth));
                    } else {
                        next.push(c);
                    }
                }
            }
        }
        layer = next;
    }
    let words = k.div_ceil(64);
    // slices[s][w]: bit s of the weighted +1 count at the sites of word w
    let mut slices = vec![vec![0u64; words]; levels + 1];
    for (y, exp) in frontier {
        let owned;
        let seq: &BitSeq = if children(y).is_none() {
            leaf_seq(y)
        } else {
            owned = block_value(y, children, leaf_seq, levels, k, ties)?;
            &owned
        };
        if seq.len() != k {
            return Err(AncestralError::LengthMismatch);
        }
        for (w, &bits) in seq.words().iter().enumerate() {
            let mut carry = bits;
            for slice in slices.iter_mut().skip(exp) {
                if carry == 0 {
                    break;
                }
                let t = slice[w] & carry;
                slice[w] ^= carry;
                carry = t;
            }
        }
    }
    let tie = ties.mask(x, k);
    let out: Vec<u64> = (0..words)
        .map(|w| {
            let low = slices[..levels - 1].iter().fold(0u64, |acc, s| acc | s[w]);
            let half = slices[levels - 1][w];
            let full = slices[levels][w];
            // count > 2^{ℓ−1}: either all weight, or the half bit plus something below
            let gt = full | (half & low);
            let eq = half & !low & !full;
            gt | (eq & tie.get(w).copied().unwrap_or(0))
        })
        .collect();
    Ok(BitSeq::from_words(k, out))
}

/// [`anc_estimate`] at the root of a rooted [`PhyloTree`], reading leaf
/// sequences from `matrix` by label.
pub fn anc_estimate_tree(
    tree: &PhyloTree,
    matrix: &CharacterMatrix,
    levels: u32,
    ties: &dyn TieBits,
) -> Result<BitSeq, AncestralError> {
    let root = tree.root().ok_or(AncestralError::NotRootedBinary)?;
    let lay = tree.layout(root);
    if lay.children.iter().any(|c| !(c.is_empty() || c.len() == 2)) {
        return Err(AncestralError::NotRootedBinary);
    }
    if matrix.cfn_row(0).is_none() && matrix.n() > 0 {
        return Err(AncestralError::WrongAlphabet);
    }
    let mut row_of = vec![usize::MAX; tree.n_nodes()];
    for &leaf in tree.leaves() {
        let label = tree.label(leaf).expect("leaves are labelled");
        let i = matrix.labels().iter().position(|&l| l == label).ok_or(AncestralError::MissingLabel(label))?;
        row_of[leaf] = i;
    }
    let children = |x: NodeId| match lay.children[x].as_slice() {
        [a, b] => Some([*a, *b]),
        _ => None,
    };
    let leaf_seq = |x: NodeId| matrix.cfn_row(row_of[x]).expect("checked alphabet");
    anc_estimate(root, &children, &leaf_seq, levels, ties)
}
