use super::{PhyloTree, TreeError};
use std::collections::BTreeSet;

/// A split of the leaf labels induced by one edge, stored as the bitset of
/// the side that contains label 1 (bit `i` stands for label `i + 1`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bipartition {
    words: Vec<u64>,
    n: usize,
}

impl Bipartition {
    fn from_side(side: &[bool]) -> Self {
        let n = side.len();
        let flip = !side[0];
        let mut words = vec![0u64; n.div_ceil(64)];
        for (i, &s) in side.iter().enumerate() {
            if s ^ flip {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Bipartition { words, n }
    }

    /// Labels on the side containing label 1.
    pub fn first_side(&self) -> Vec<u32> {
        (0..self.n).filter(|&i| self.words[i / 64] >> (i % 64) & 1 == 1).map(|i| i as u32 + 1).collect()
    }

    /// Labels on the other side.
    pub fn second_side(&self) -> Vec<u32> {
        (0..self.n).filter(|&i| self.words[i / 64] >> (i % 64) & 1 == 0).map(|i| i as u32 + 1).collect()
    }

    fn smaller_side(&self) -> usize {
        let ones: usize = self.words.iter().map(|w| w.count_ones() as usize).sum();
        ones.min(self.n - ones)
    }
}

/// Nontrivial bipartitions (both sides with at least two leaves).
pub fn bipartitions(tree: &PhyloTree) -> BTreeSet<Bipartition> {
    let n = tree.n_leaves();
    let lay = tree.rooted_layout();
    // leaf membership of every subtree, built bottom-up
    let mut below: Vec<Vec<bool>> = vec![Vec::new(); tree.n_nodes()];
    let mut out = BTreeSet::new();
    for &x in lay.preorder.iter().rev() {
        let mut side = vec![false; n];
        if let Some(l) = tree.label(x) {
            side[l as usize - 1] = true;
        }
        for &c in &lay.children[x] {
            let child = std::mem::take(&mut below[c]);
            for (s, b) in side.iter_mut().zip(child) {
                *s |= b;
            }
        }
        if x != lay.root {
            let bp = Bipartition::from_side(&side);
            if bp.smaller_side() >= 2 {
                out.insert(bp);
            }
        }
        below[x] = side;
    }
    out
}

/// Robinson-Foulds distance: size of the symmetric difference of the two
/// trees' nontrivial bipartition sets.
pub fn rf_distance(a: &PhyloTree, b: &PhyloTree) -> Result<usize, TreeError> {
    if a.n_leaves() != b.n_leaves() {
        return Err(TreeError::LeafSetMismatch);
    }
    let sa = bipartitions(a);
    let sb = bipartitions(b);
    Ok(sa.symmetric_difference(&sb).count())
}
