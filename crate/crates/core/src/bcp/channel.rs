use super::ForestState;
use crate::ancestral::{anc_estimate, KeyedTies};
use crate::distances::{dist_hat, ExtendedDistance, NodeMetric};
use crate::rng::derive_seed;
use crate::seq::BitSeq;
use crate::treekit::{DistanceMatrix, NodeId, PhyloTree};
use rayon::prelude::*;

const TIE_TAG: u64 = 0x5449_4553;

/// A [`NodeMetric`] that must be told when the forest gains nodes.
pub trait Channel: NodeMetric + Send {
    /// Makes `node_dist` available for every live node of `forest`.
    fn prepare(&mut self, forest: &ForestState);
}

/// Empirical distances between recursive-majority reconstructions.
///
/// Reconstructed sequences are cached per live node; a node's subtree never
/// changes while it is alive, and ids of removed nodes are never reused, so
/// entries are dropped as soon as their node dies.  Pairwise distances are
/// memoised in a dense matrix over recycled slots.
pub struct StatisticalChannel {
    leaves: Vec<BitSeq>,
    levels: u32,
    tie_seed: u64,
    seqs: Vec<Option<BitSeq>>,
    slot_of: Vec<u32>,
    free: Vec<u32>,
    cap: usize,
    memo: Vec<f64>,
}

const NO_SLOT: u32 = u32::MAX;

impl StatisticalChannel {
    /// `leaves[i]` is the sequence of forest leaf `i` (label `i + 1`).
    pub fn new(leaves: Vec<BitSeq>, levels: u32, seed: u64) -> Self {
        StatisticalChannel {
            leaves,
            levels,
            tie_seed: derive_seed(seed, TIE_TAG),
            seqs: Vec::new(),
            slot_of: Vec::new(),
            free: Vec::new(),
            cap: 0,
            memo: Vec::new(),
        }
    }

    /// Reconstructed sequence at `x`, if prepared.
    pub fn sequence(&self, x: NodeId) -> Option<&BitSeq> {
        self.seqs.get(x).and_then(|s| s.as_ref())
    }

    fn release(&mut self, x: NodeId) {
        self.seqs[x] = None;
        let s = std::mem::replace(&mut self.slot_of[x], NO_SLOT);
        if s != NO_SLOT {
            let s = s as usize;
            for t in 0..self.cap {
                self.memo[s * self.cap + t] = f64::NAN;
                self.memo[t * self.cap + s] = f64::NAN;
            }
            self.free.push(s as u32);
        }
    }

    fn claim(&mut self, x: NodeId) {
        if self.slot_of[x] != NO_SLOT {
            return;
        }
        let s = match self.free.pop() {
            Some(s) => s as usize,
            None => {
                let used = self.cap - self.free.len();
                let want = (2 * self.cap).max(used + 1).max(16);
                let mut memo = vec![f64::NAN; want * want];
                for a in 0..self.cap {
                    memo[a * want..a * want + self.cap].copy_from_slice(&self.memo[a * self.cap..(a + 1) * self.cap]);
                }
                self.free.extend((self.cap + 1..want).rev().map(|s| s as u32));
                let s = self.cap;
                self.memo = memo;
                self.cap = want;
                s
            }
        };
        self.slot_of[x] = s as u32;
    }

    fn memo_index(&self, a: NodeId, b: NodeId) -> Option<usize> {
        let (sa, sb) = (*self.slot_of.get(a)?, *self.slot_of.get(b)?);
        (sa != NO_SLOT && sb != NO_SLOT).then(|| sa as usize * self.cap + sb as usize)
    }
}

impl Channel for StatisticalChannel {
    fn prepare(&mut self, forest: &ForestState) {
        let bound = forest.id_bound();
        if self.seqs.len() < bound {
            self.seqs.resize(bound, None);
            self.slot_of.resize(bound, NO_SLOT);
        }
        let dead: Vec<NodeId> = (0..self.seqs.len()).filter(|&x| self.slot_of[x] != NO_SLOT && !forest.contains(x)).collect();
        for x in dead {
            self.release(x);
        }
        let alive = forest.alive_nodes();
        for &x in &alive {
            self.claim(x);
        }
        let missing: Vec<NodeId> = alive.iter().copied().filter(|&x| self.seqs[x].is_none()).collect();
        let leaves = &self.leaves;
        let levels = self.levels;
        let seed = self.tie_seed;
        let fresh: Vec<(NodeId, BitSeq)> = missing
            .par_iter()
            .map(|&x| {
                let children = |y: NodeId| forest.children(y);
                let leaf_seq = |y: NodeId| &leaves[y];
                let ties = KeyedTies { seed, root: x };
                (x, anc_estimate(x, &children, &leaf_seq, levels, &ties).expect("forest subtrees are binary"))
            })
            .collect();
        for (x, s) in fresh {
            self.seqs[x] = Some(s);
        }
        let pairs: Vec<(NodeId, NodeId)> = alive
            .iter()
            .enumerate()
            .flat_map(|(i, &a)| alive[i + 1..].iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| self.memo[self.memo_index(a, b).expect("slots claimed")].is_nan())
            .collect();
        let seqs = &self.seqs;
        let vals: Vec<f64> = pairs
            .par_iter()
            .map(|&(a, b)| {
                dist_hat(seqs[a].as_ref().unwrap(), seqs[b].as_ref().unwrap()).expect("equal lengths").value()
            })
            .collect();
        for ((a, b), v) in pairs.into_iter().zip(vals) {
            let (i, j) = (self.memo_index(a, b).unwrap(), self.memo_index(b, a).unwrap());
            self.memo[i] = v;
            self.memo[j] = v;
        }
    }
}

impl NodeMetric for StatisticalChannel {
    fn node_dist(&self, a: NodeId, b: NodeId) -> ExtendedDistance {
        if a == b {
            return ExtendedDistance::ZERO;
        }
        match self.memo_index(a, b).map(|i| self.memo[i]) {
            Some(v) if !v.is_nan() => ExtendedDistance::new(v),
            _ => {
                let (sa, sb) = (self.sequence(a), self.sequence(b));
                dist_hat(sa.expect("prepared node"), sb.expect("prepared node")).expect("equal lengths")
            }
        }
    }
}

/// Positions of forest nodes in the true tree.
///
/// A leaf sits at its labelled leaf.  A cherry node `u` with children
/// `c1, c2` sits at the node of the true path between their positions whose
/// distance from `c1`'s position is closest to `h(c1)` (first such node on
/// ties).  For a legal forest with exact edge estimates this is the true
/// position of `u`.
#[derive(Debug, Clone)]
pub struct Anchors {
    leaf_node: Vec<NodeId>,
    anchor: Vec<Option<NodeId>>,
}

impl Anchors {
    pub fn new(tree: &PhyloTree) -> Self {
        let leaf_node = (1..=tree.n_leaves() as u32).map(|l| tree.leaf(l).expect("labels 1..=n")).collect();
        Anchors { leaf_node, anchor: Vec::new() }
    }

    /// Places every live node of `forest` that has no position yet.
    pub fn update(&mut self, forest: &ForestState, tree: &PhyloTree, dist: &DistanceMatrix) {
        self.anchor.resize(forest.id_bound(), None);
        // ids grow with creation, so children are placed before parents
        for x in forest.alive_nodes() {
            if self.anchor[x].is_some() {
                continue;
            }
            let pos = match forest.children(x) {
                None => self.leaf_node[x],
                Some([c1, c2]) => {
                    let a1 = self.anchor[c1].expect("children placed first");
                    let a2 = self.anchor[c2].expect("children placed first");
                    let path = tree.path(a1, a2).expect("nodes of the tree");
                    let target = forest.h(c1);
                    let mut best = path[0];
                    let mut best_err = f64::INFINITY;
                    for &p in &path {
                        let err = (dist.get(a1, p) - target).abs();
                        if err < best_err - 1e-12 {
                            best = p;
                            best_err = err;
                        }
                    }
                    best
                }
            };
            self.anchor[x] = Some(pos);
        }
    }

    pub fn get(&self, x: NodeId) -> Option<NodeId> {
        self.anchor.get(x).copied().flatten()
    }
}

/// True path distances between the positions of forest nodes.
pub struct PerfectChannel {
    tree: PhyloTree,
    dist: DistanceMatrix,
    anchors: Anchors,
}

impl PerfectChannel {
    /// A rooted `tree` is unrooted first, so no anchor lands on a degree-2
    /// root.
    pub fn new(tree: PhyloTree) -> Self {
        let tree = tree.unrooted();
        let dist = tree.distance_matrix();
        let anchors = Anchors::new(&tree);
        PerfectChannel { tree, dist, anchors }
    }

    pub fn anchors(&self) -> &Anchors {
        &self.anchors
    }
}

impl Channel for PerfectChannel {
    fn prepare(&mut self, forest: &ForestState) {
        self.anchors.update(forest, &self.tree, &self.dist);
    }
}

impl NodeMetric for PerfectChannel {
    fn node_dist(&self, a: NodeId, b: NodeId) -> ExtendedDistance {
        let pa = self.anchors.get(a).expect("prepared node");
        let pb = self.anchors.get(b).expect("prepared node");
        ExtendedDistance::new(self.dist.get(pa, pb))
    }
}
