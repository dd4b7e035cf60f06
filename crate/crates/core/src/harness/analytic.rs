//! Exact expectations for reconstructed sequences.
//!
//! For a node `x` of a rooted tree, `m(x) = E[σ̂_x σ_x]` is the correlation
//! between the recursive-majority reconstruction at `x` (from the leaves
//! below `x`) and the true state at `x`.  Because the reconstruction at `x`
//! depends only on leaves below `x`, two reconstructions over disjoint
//! subtrees satisfy `E[σ̂_a σ̂_b] = m(a) m(b) e^{−2 d(a, b)}`.

use crate::distances::{ExtendedDistance, NodeMetric};
use crate::treekit::{DistanceMatrix, NodeId, PhyloTree, RootedLayout};

/// Per-node reconstruction correlations over a rooted tree.
pub struct AnalyticChannel {
    layout: RootedLayout,
    dist: DistanceMatrix,
    m: Vec<f64>,
}

/// Distribution of a weighted ±1 sum, stored with offset `2^levels`.
type SumDist = Vec<f64>;

impl AnalyticChannel {
    /// Computes `m` for every node of `tree` hung from `root`.
    pub fn new(tree: &PhyloTree, root: NodeId, levels: u32) -> Self {
        let layout = tree.layout(root);
        let dist = tree.distance_matrix();
        let mut m = vec![f64::NAN; tree.n_nodes()];
        for &x in layout.preorder.iter().rev() {
            m[x] = block_correlation(&layout, x, levels, &m);
        }
        AnalyticChannel { layout, dist, m }
    }

    pub fn correlation(&self, x: NodeId) -> f64 {
        self.m[x]
    }

    pub fn layout(&self) -> &RootedLayout {
        &self.layout
    }
}

/// `m(x)` given `m` of every node strictly below `x`.
fn block_correlation(lay: &RootedLayout, x: NodeId, levels: u32, m: &[f64]) -> f64 {
    if lay.children[x].is_empty() {
        return 1.0;
    }
    let width = 1usize << levels;
    let dist = sum_given_plus(lay, x, 0, levels, m);
    let neg: f64 = dist[..width].iter().sum();
    let pos: f64 = dist[width + 1..].iter().sum();
    pos - neg
}

/// Distribution of the weighted frontier sum below `z` (at relative depth
/// `depth`) given `σ_z = +1`.
fn sum_given_plus(lay: &RootedLayout, z: NodeId, depth: u32, levels: u32, m: &[f64]) -> SumDist {
    let width = 1usize << levels;
    let mut out = vec![0.0; 2 * width + 1];
    if lay.children[z].is_empty() {
        out[width + (1usize << (levels - depth))] = 1.0;
        return out;
    }
    if depth == levels {
        let p = (1.0 + m[z]) / 2.0;
        out[width + 1] = p;
        out[width - 1] = 1.0 - p;
        return out;
    }
    out[width] = 1.0;
    for &c in &lay.children[z] {
        let theta = (-2.0 * lay.parent_len[c]).exp();
        let keep = (1.0 + theta) / 2.0;
        let plus = sum_given_plus(lay, c, depth + 1, levels, m);
        // given σ_z = +1 the child is −1 with probability 1 − keep, and the
        // sum given a −1 child is the mirror image
        let child: SumDist = (0..plus.len()).map(|i| keep * plus[i] + (1.0 - keep) * plus[plus.len() - 1 - i]).collect();
        out = convolve(&out, &child, width);
    }
    out
}

fn convolve(a: &[f64], b: &[f64], width: usize) -> SumDist {
    let mut out = vec![0.0; a.len()];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            if y != 0.0 {
                // offsets add: (i − w) + (j − w) + w
                out[i + j - width] += x * y;
            }
        }
    }
    out
}

impl NodeMetric for AnalyticChannel {
    /// `−½ ln E[σ̂_a σ̂_b]` for nodes with disjoint subtrees.
    fn node_dist(&self, a: NodeId, b: NodeId) -> ExtendedDistance {
        if a == b {
            return ExtendedDistance::ZERO;
        }
        let c = self.m[a] * self.m[b] * (-2.0 * self.dist.get(a, b)).exp();
        if c > 0.0 {
            ExtendedDistance::new(-0.5 * c.ln())
        } else {
            ExtendedDistance::INF
        }
    }
}
