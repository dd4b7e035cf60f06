//! Runtime checks of the forest against the true tree.

use super::{Anchors, ForestState};
use crate::params::AlgoParams;
use crate::treekit::{DistanceMatrix, NodeId, PhyloTree};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

/// The property an audit finding is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Claim {
    /// Forest trees are legal, pairwise edge-disjoint restricted subtrees.
    LegalSubforest,
    /// True lengths of forest edges are at most g′.
    EdgeLengths,
    /// Every edge estimate is within ε/16 of the true length.
    EdgeAccuracy,
    /// No two forest trees collide within `R_col`.
    NoCloseCollision,
    /// The fixed subforest never loses nodes and gains at least one per
    /// iteration.
    FixedGrowth,
    /// At most `2n` iterations.
    IterationBound,
    /// Every removal targets the edge a tree really collides into.
    GenuineRemoval,
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Claim::LegalSubforest => "legal subforest",
            Claim::EdgeLengths => "edge lengths at most g'",
            Claim::EdgeAccuracy => "edge estimates within eps/16",
            Claim::NoCloseCollision => "no collision within R_col",
            Claim::FixedGrowth => "fixed subforest grows",
            Claim::IterationBound => "at most 2n iterations",
            Claim::GenuineRemoval => "removals are genuine collisions",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AuditViolation {
    pub iteration: usize,
    pub claim: Claim,
    pub detail: String,
}

impl fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iteration {}: {} violated: {}", self.iteration, self.claim, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct AuditReport {
    pub violations: Vec<AuditViolation>,
    /// Size of the fixed subforest after each iteration, starting with the
    /// initial forest of leaves.
    pub fixed_sizes: Vec<usize>,
    pub removals_checked: usize,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Leaf-label bitset.
type LeafSet = Vec<u64>;

/// Tracks a run against the true tree.
pub struct Auditor {
    tree: PhyloTree,
    dist: DistanceMatrix,
    anchors: Anchors,
    /// Leaves on `a`'s side of the edge `{a, b}`, keyed by `(a, b)`.
    side: HashMap<(NodeId, NodeId), LeafSet>,
    words: usize,
    g_prime: f64,
    eps: f64,
    r_col: f64,
    fixed: BTreeSet<NodeId>,
    report: AuditReport,
}

impl Auditor {
    pub fn new(tree: &PhyloTree, params: &AlgoParams) -> Self {
        let tree = tree.unrooted();
        let dist = tree.distance_matrix();
        let anchors = Anchors::new(&tree);
        let words = tree.n_leaves().div_ceil(64);
        let mut side = HashMap::new();
        for (a, b, _) in tree.edges() {
            side_of(&tree, a, b, words, &mut side);
            side_of(&tree, b, a, words, &mut side);
        }
        Auditor {
            tree,
            dist,
            anchors,
            side,
            words,
            g_prime: params.g_prime,
            eps: params.eps,
            r_col: params.r_col,
            fixed: BTreeSet::new(),
            report: AuditReport::default(),
        }
    }

    /// Places new forest nodes; call after every cherry addition phase.
    pub fn place(&mut self, forest: &ForestState) {
        self.anchors.update(forest, &self.tree, &self.dist);
    }

    pub fn anchors(&self) -> &Anchors {
        &self.anchors
    }

    fn violation(&mut self, iteration: usize, claim: Claim, detail: String) {
        self.report.violations.push(AuditViolation { iteration, claim, detail });
    }

    fn anchor(&self, x: NodeId) -> NodeId {
        self.anchors.get(x).expect("placed before auditing")
    }

    /// True-tree vertices covered by the forest tree rooted at `r`.
    fn embedding(&self, forest: &ForestState, r: NodeId) -> HashSet<NodeId> {
        let mut emb = HashSet::from([self.anchor(r)]);
        for x in forest.subtree_bfs(r).into_iter().skip(1) {
            let p = forest.parent(x).expect("non-root");
            emb.extend(self.tree.path(self.anchor(p), self.anchor(x)).expect("tree nodes"));
        }
        emb
    }

    /// Where the path from tree `a` to tree `b` leaves `a` and enters `b`.
    fn attachment(&self, forest: &ForestState, a: NodeId, b: NodeId) -> (NodeId, NodeId) {
        let ea = self.embedding(forest, a);
        let eb = self.embedding(forest, b);
        let path = self.tree.path(self.anchor(a), self.anchor(b)).expect("tree nodes");
        let j = path.iter().position(|x| eb.contains(x)).expect("path ends in b");
        let i = path[..=j].iter().rposition(|x| ea.contains(x)).expect("path starts in a");
        (path[i], path[j])
    }

    /// Checks that removing `v` (found by testing `u0` against `u1`) undoes
    /// a real collision of `T_{u0}` into the edge above `v`.  Call before the
    /// removal is applied.
    pub fn check_removal(&mut self, forest: &ForestState, u0: NodeId, u1: NodeId, v: NodeId) {
        self.report.removals_checked += 1;
        let iteration = forest.iteration();
        let Some(u) = forest.parent(v) else {
            self.violation(iteration, Claim::GenuineRemoval, format!("node {v} has no parent"));
            return;
        };
        let (_, w2) = self.attachment(forest, u0, u1);
        let edge = self.tree.path(self.anchor(u), self.anchor(v)).expect("tree nodes");
        if !edge[1..].contains(&w2) {
            self.violation(
                iteration,
                Claim::GenuineRemoval,
                format!("tree {u0} attaches to tree {u1} at vertex {w2}, not on edge ({u}, {v})"),
            );
        }
    }

    /// Checks the forest invariants after a completed iteration.
    pub fn check_iteration(&mut self, forest: &ForestState) {
        let iteration = forest.iteration();
        self.check_edges(forest, iteration);
        self.check_collisions(forest, iteration);
        self.check_fixed(forest, iteration);
    }

    fn check_edges(&mut self, forest: &ForestState, iteration: usize) {
        let mut used: HashMap<(NodeId, NodeId), NodeId> = HashMap::new();
        let tol = self.eps / 16.0 + 1e-9;
        let mut found = Vec::new();
        for root in forest.roots() {
            let nodes = forest.subtree_bfs(root);
            let anchors: HashSet<NodeId> = nodes.iter().map(|&x| self.anchor(x)).collect();
            for &c in &nodes[1..] {
                let p = forest.parent(c).expect("non-root");
                let path = self.tree.path(self.anchor(p), self.anchor(c)).expect("tree nodes");
                if path.len() < 2 {
                    found.push((Claim::LegalSubforest, format!("edge ({p}, {c}) has an empty path")));
                    continue;
                }
                for w in path.windows(2) {
                    let key = (w[0].min(w[1]), w[0].max(w[1]));
                    if let Some(other) = used.insert(key, c) {
                        found.push((
                            Claim::LegalSubforest,
                            format!("edges above {other} and {c} share true edge {key:?}"),
                        ));
                    }
                }
                if let Some(x) = path[1..path.len() - 1].iter().find(|x| anchors.contains(x)) {
                    found.push((Claim::LegalSubforest, format!("vertex {x} lies inside the path of edge ({p}, {c})")));
                }
                let d = self.dist.get(path[0], path[path.len() - 1]);
                let h = forest.h(c);
                if d > self.g_prime + 1e-9 || h >= self.g_prime + self.eps / 16.0 {
                    found.push((Claim::EdgeLengths, format!("edge ({p}, {c}): true {d}, estimate {h}")));
                }
                if (h - d).abs() > tol {
                    found.push((Claim::EdgeAccuracy, format!("edge ({p}, {c}): true {d}, estimate {h}")));
                }
            }
        }
        for (claim, detail) in found {
            self.violation(iteration, claim, detail);
        }
    }

    fn check_collisions(&mut self, forest: &ForestState, iteration: usize) {
        let roots = forest.roots();
        let mut found = Vec::new();
        for &r1 in &roots {
            for &r2 in &roots {
                if r1 == r2 || forest.is_leaf(r2) {
                    continue;
                }
                let (w1, w2) = self.attachment(forest, r1, r2);
                let d = self.dist.get(w1, w2);
                if w2 != self.anchor(r2) && d <= self.r_col {
                    found.push(format!("tree {r1} collides into tree {r2} at vertex {w2}, distance {d}"));
                }
            }
        }
        for detail in found {
            self.violation(iteration, Claim::NoCloseCollision, detail);
        }
    }

    fn leaf_set(&self, forest: &ForestState, x: NodeId) -> LeafSet {
        let mut s = vec![0u64; self.words];
        for l in forest.subtree_leaves(x) {
            s[l / 64] |= 1 << (l % 64);
        }
        s
    }

    /// Nodes whose subtree is a clade of the true tree hanging off the
    /// node's own position.
    fn fixed_nodes(&self, forest: &ForestState) -> BTreeSet<NodeId> {
        forest
            .alive_nodes()
            .into_iter()
            .filter(|&x| {
                if forest.is_leaf(x) {
                    return true;
                }
                let a = self.anchor(x);
                let mine = self.leaf_set(forest, x);
                self.tree.neighbors(a).iter().any(|&(b, _)| self.side[&(a, b)] == mine)
            })
            .collect()
    }

    fn check_fixed(&mut self, forest: &ForestState, iteration: usize) {
        let now = self.fixed_nodes(forest);
        if self.report.fixed_sizes.is_empty() {
            // the initial forest of leaves
            self.report.fixed_sizes.push(forest.n_leaves());
            self.fixed = (0..forest.n_leaves()).collect();
        }
        let lost: Vec<NodeId> = self.fixed.difference(&now).copied().collect();
        if !lost.is_empty() {
            self.violation(iteration, Claim::FixedGrowth, format!("fixed nodes {lost:?} were lost"));
        }
        if now.len() <= self.fixed.len() {
            self.violation(
                iteration,
                Claim::FixedGrowth,
                format!("fixed subforest did not grow ({} nodes)", now.len()),
            );
        }
        self.report.fixed_sizes.push(now.len());
        self.fixed = now;
    }

    /// Final check on the iteration count.
    pub fn finish(mut self, iterations: usize, n: usize) -> AuditReport {
        if iterations > 2 * n {
            self.violation(iterations, Claim::IterationBound, format!("{iterations} iterations for {n} leaves"));
        }
        self.report
    }
}

fn side_of(
    tree: &PhyloTree,
    a: NodeId,
    b: NodeId,
    words: usize,
    memo: &mut HashMap<(NodeId, NodeId), LeafSet>,
) -> LeafSet {
    if let Some(s) = memo.get(&(a, b)) {
        return s.clone();
    }
    // iterative post-order over directed edges to avoid deep recursion
    let mut stack = vec![(a, b, false)];
    while let Some((x, from, expanded)) = stack.pop() {
        if memo.contains_key(&(x, from)) {
            continue;
        }
        let next: Vec<NodeId> = tree.neighbors(x).iter().map(|&(y, _)| y).filter(|&y| y != from).collect();
        if expanded {
            let mut s = vec![0u64; words];
            if let Some(l) = tree.label(x) {
                let i = l as usize - 1;
                s[i / 64] |= 1 << (i % 64);
            }
            for y in next {
                for (w, v) in s.iter_mut().zip(&memo[&(y, x)]) {
                    *w |= v;
                }
            }
            memo.insert((x, from), s);
        } else {
            stack.push((x, from, true));
            for y in next {
                if !memo.contains_key(&(y, x)) {
                    stack.push((y, x, false));
                }
            }
        }
    }
    memo[&(a, b)].clone()
}
