//! Binary phylogenies with leaf labels and positive edge lengths.
//!
//! A [`PhyloTree`] is stored as an adjacency list.  It is either in rooted
//! form (a designated root of degree 2, every other internal node of degree 3)
//! or unrooted (every internal node of degree 3).  Leaves carry the labels
//! `1..=n`.

mod compare;
mod newick;
mod restrict;

pub use compare::{bipartitions, rf_distance, Bipartition};
pub use newick::{newick_parse, newick_parse_with, newick_write};
pub use restrict::{are_edge_disjoint, restrict, true_quartet_split, QuartetSplit, RestrictedTree};

use std::collections::VecDeque;
use thiserror::Error;

/// Index of a node inside one tree.
pub type NodeId = usize;

/// Errors raised by tree construction, parsing and queries.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("syntax error at byte offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("missing branch length at byte offset {offset}")]
    MissingBranchLength { offset: usize },
    #[error("node {node} has {degree} neighbours; binary trees need {expected}")]
    NonBinary { node: NodeId, degree: usize, expected: &'static str },
    #[error("invalid edge length {length} on edge ({a}, {b})")]
    BadLength { a: NodeId, b: NodeId, length: f64 },
    #[error("leaf labels must be exactly 1..={n}: {detail}")]
    BadLabels { n: usize, detail: String },
    #[error("edge list does not form a tree: {0}")]
    NotATree(String),
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("empty node set")]
    EmptyNodeSet,
    #[error("duplicate node {0} in quartet")]
    DuplicateNode(NodeId),
    #[error("leaf label sets differ")]
    LeafSetMismatch,
}

/// How strictly [`PhyloTree::from_edges`] validates its input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Validation {
    /// Accept internal nodes of any degree ≥ 2.
    pub allow_multifurcation: bool,
    /// Accept zero-length edges (used for reconstructed trees, whose lengths
    /// are estimates and may collapse to 0).
    pub allow_zero_length: bool,
}

/// A leaf-labelled tree with edge lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct PhyloTree {
    adj: Vec<Vec<(NodeId, f64)>>,
    label: Vec<Option<u32>>,
    leaf_of: Vec<NodeId>,
    root: Option<NodeId>,
}

/// Parent/children layout of a tree hung from a chosen root.
#[derive(Debug, Clone)]
pub struct RootedLayout {
    pub root: NodeId,
    pub parent: Vec<Option<NodeId>>,
    /// Length of the edge to the parent (0 for the root).
    pub parent_len: Vec<f64>,
    /// Children in canonical order (smallest descendant leaf label first).
    pub children: Vec<Vec<NodeId>>,
    /// Pre-order traversal respecting the canonical child order.
    pub preorder: Vec<NodeId>,
    pub depth: Vec<usize>,
    /// Smallest leaf label in each subtree.
    pub min_label: Vec<u32>,
}

impl PhyloTree {
    /// Builds a tree from an undirected edge list.
    ///
    /// `labels` assigns a label to every degree-1 node.  When `root` is given
    /// the tree is in rooted form and the root must have degree 2.
    pub fn from_edges(
        n_nodes: usize,
        edges: &[(NodeId, NodeId, f64)],
        labels: &[(NodeId, u32)],
        root: Option<NodeId>,
        validation: Validation,
    ) -> Result<Self, TreeError> {
        if n_nodes == 0 {
            return Err(TreeError::NotATree("no nodes".into()));
        }
        if edges.len() + 1 != n_nodes {
            return Err(TreeError::NotATree(format!(
                "{} nodes need {} edges, got {}",
                n_nodes,
                n_nodes - 1,
                edges.len()
            )));
        }
        let mut adj = vec![Vec::new(); n_nodes];
        for &(a, b, len) in edges {
            if a >= n_nodes {
                return Err(TreeError::UnknownNode(a));
            }
            if b >= n_nodes {
                return Err(TreeError::UnknownNode(b));
            }
            if a == b {
                return Err(TreeError::NotATree(format!("self loop at {a}")));
            }
            let ok = len.is_finite() && (len > 0.0 || (validation.allow_zero_length && len == 0.0));
            if !ok {
                return Err(TreeError::BadLength { a, b, length: len });
            }
            adj[a].push((b, len));
            adj[b].push((a, len));
        }
        // connectivity (with n-1 edges this also rules out cycles)
        let mut seen = vec![false; n_nodes];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = queue.pop_front() {
            for &(y, _) in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    count += 1;
                    queue.push_back(y);
                }
            }
        }
        if count != n_nodes {
            return Err(TreeError::NotATree("graph is disconnected".into()));
        }
        let mut label = vec![None; n_nodes];
        for &(node, l) in labels {
            if node >= n_nodes {
                return Err(TreeError::UnknownNode(node));
            }
            label[node] = Some(l);
        }
        let n_leaves = adj.iter().filter(|a| a.len() == 1).count();
        let mut leaf_of = vec![usize::MAX; n_leaves];
        for (node, nb) in adj.iter().enumerate() {
            let is_leaf = nb.len() == 1;
            match (is_leaf, label[node]) {
                (true, None) => {
                    return Err(TreeError::BadLabels { n: n_leaves, detail: format!("leaf node {node} has no label") })
                }
                (false, Some(l)) => {
                    return Err(TreeError::BadLabels {
                        n: n_leaves,
                        detail: format!("internal node {node} carries label {l}"),
                    })
                }
                (true, Some(l)) => {
                    let idx = l as usize;
                    if idx == 0 || idx > n_leaves || leaf_of[idx - 1] != usize::MAX {
                        return Err(TreeError::BadLabels { n: n_leaves, detail: format!("label {l} out of range or repeated") });
                    }
                    leaf_of[idx - 1] = node;
                }
                (false, None) => {
                    let deg = nb.len();
                    let expected_deg = if Some(node) == root { 2 } else { 3 };
                    let bad = if validation.allow_multifurcation { deg < 2 } else { deg != expected_deg };
                    if bad {
                        return Err(TreeError::NonBinary {
                            node,
                            degree: deg,
                            expected: if Some(node) == root { "2 at the root" } else { "3" },
                        });
                    }
                }
            }
        }
        if n_nodes == 1 {
            return Err(TreeError::NotATree("a single node is not a tree".into()));
        }
        if let Some(r) = root {
            if r >= n_nodes {
                return Err(TreeError::UnknownNode(r));
            }
            if label[r].is_some() {
                return Err(TreeError::NotATree("the root cannot be a leaf".into()));
            }
        } else if n_leaves == 2 && n_nodes == 2 {
            return Err(TreeError::NotATree("a two-leaf tree must be given in rooted form".into()));
        }
        Ok(PhyloTree { adj, label, leaf_of, root })
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_of.len()
    }

    pub fn root(&self) -> Option<NodeId> {
        self.root
    }

    pub fn label(&self, node: NodeId) -> Option<u32> {
        self.label.get(node).copied().flatten()
    }

    /// Node carrying leaf label `label`.
    pub fn leaf(&self, label: u32) -> Option<NodeId> {
        let idx = (label as usize).checked_sub(1)?;
        self.leaf_of.get(idx).copied()
    }

    pub fn is_leaf(&self, node: NodeId) -> bool {
        self.adj[node].len() == 1
    }

    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, f64)] {
        &self.adj[node]
    }

    /// Leaf nodes in label order.
    pub fn leaves(&self) -> &[NodeId] {
        &self.leaf_of
    }

    /// Every edge once, as `(a, b, length)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(NodeId, NodeId, f64)> {
        let mut out: Vec<_> = self
            .adj
            .iter()
            .enumerate()
            .flat_map(|(a, nb)| nb.iter().filter(move |(b, _)| a < *b).map(move |&(b, l)| (a, b, l)))
            .collect();
        out.sort_by_key(|x| (x.0, x.1));
        out
    }

    pub fn edge_length(&self, a: NodeId, b: NodeId) -> Option<f64> {
        self.adj.get(a)?.iter().find(|(x, _)| *x == b).map(|&(_, l)| l)
    }

    fn check(&self, node: NodeId) -> Result<(), TreeError> {
        if node < self.adj.len() {
            Ok(())
        } else {
            Err(TreeError::UnknownNode(node))
        }
    }

    /// Node used as the top of the canonical layout: the designated root, or
    /// for unrooted trees the internal neighbour of leaf 1.
    pub fn canonical_top(&self) -> NodeId {
        match self.root {
            Some(r) => r,
            None => self.adj[self.leaf_of[0]][0].0,
        }
    }

    /// Hangs the tree from `root`, with children in canonical order.
    pub fn layout(&self, root: NodeId) -> RootedLayout {
        let n = self.adj.len();
        let mut parent = vec![None; n];
        let mut parent_len = vec![0.0; n];
        let mut depth = vec![0usize; n];
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![root];
        let mut visited = vec![false; n];
        visited[root] = true;
        while let Some(x) = stack.pop() {
            order.push(x);
            for &(y, l) in &self.adj[x] {
                if !visited[y] {
                    visited[y] = true;
                    parent[y] = Some(x);
                    parent_len[y] = l;
                    depth[y] = depth[x] + 1;
                    stack.push(y);
                }
            }
        }
        let mut min_label = vec![u32::MAX; n];
        for &x in order.iter().rev() {
            if let Some(l) = self.label[x] {
                min_label[x] = min_label[x].min(l);
            }
            if let Some(p) = parent[x] {
                min_label[p] = min_label[p].min(min_label[x]);
            }
        }
        let mut children = vec![Vec::new(); n];
        for &x in &order {
            if let Some(p) = parent[x] {
                children[p].push(x);
            }
        }
        for c in children.iter_mut() {
            c.sort_by_key(|&y| min_label[y]);
        }
        let mut preorder = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            preorder.push(x);
            for &c in children[x].iter().rev() {
                stack.push(c);
            }
        }
        RootedLayout { root, parent, parent_len, children, preorder, depth, min_label }
    }

    /// Layout from the designated root; unrooted trees are hung from
    /// [`canonical_top`](Self::canonical_top).
    pub fn rooted_layout(&self) -> RootedLayout {
        self.layout(self.canonical_top())
    }

    /// Sum of edge lengths on the path between `u` and `v`.
    pub fn path_distance(&self, u: NodeId, v: NodeId) -> Result<f64, TreeError> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.distances_from(u)[v])
    }

    /// Path distances from `u` to every node.
    pub fn distances_from(&self, u: NodeId) -> Vec<f64> {
        let n = self.adj.len();
        let mut dist = vec![f64::NAN; n];
        dist[u] = 0.0;
        let mut stack = vec![u];
        while let Some(x) = stack.pop() {
            for &(y, l) in &self.adj[x] {
                if dist[y].is_nan() {
                    dist[y] = dist[x] + l;
                    stack.push(y);
                }
            }
        }
        dist
    }

    /// Node sequence of the path from `u` to `v` (both included).
    pub fn path(&self, u: NodeId, v: NodeId) -> Result<Vec<NodeId>, TreeError> {
        self.check(u)?;
        self.check(v)?;
        let n = self.adj.len();
        let mut prev = vec![usize::MAX; n];
        prev[u] = u;
        let mut stack = vec![u];
        while let Some(x) = stack.pop() {
            if x == v {
                break;
            }
            for &(y, _) in &self.adj[x] {
                if prev[y] == usize::MAX {
                    prev[y] = x;
                    stack.push(y);
                }
            }
        }
        let mut path = vec![v];
        let mut x = v;
        while x != u {
            x = prev[x];
            path.push(x);
        }
        path.reverse();
        Ok(path)
    }

    /// Returns an unrooted copy: a degree-2 root is suppressed by merging its
    /// two edges.  Trees with two leaves keep their root.
    pub fn unrooted(&self) -> PhyloTree {
        let Some(r) = self.root else { return self.clone() };
        if self.n_leaves() <= 2 {
            return self.clone();
        }
        let (a, la) = self.adj[r][0];
        let (b, lb) = self.adj[r][1];
        let remap = |x: NodeId| if x > r { x - 1 } else { x };
        let mut edges = Vec::new();
        for (x, y, l) in self.edges() {
            if x != r && y != r {
                edges.push((remap(x), remap(y), l));
            }
        }
        edges.push((remap(a), remap(b), la + lb));
        let labels: Vec<_> = self
            .label
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.map(|l| (remap(i), l)))
            .collect();
        PhyloTree::from_edges(self.adj.len() - 1, &edges, &labels, None, Validation {
            allow_multifurcation: false,
            allow_zero_length: true,
        })
        .expect("suppressing a degree-2 root keeps a valid tree")
    }

    /// Returns a rooted copy whose new root subdivides edge `(a, b)` at
    /// distance `frac * len` from `a`.  The new root gets the next free id.
    pub fn rooted_on_edge(&self, a: NodeId, b: NodeId, frac: f64) -> Result<PhyloTree, TreeError> {
        let base = self.unrooted();
        let len = base.edge_length(a, b).ok_or(TreeError::NotATree(format!("({a}, {b}) is not an edge")))?;
        let r = base.n_nodes();
        let mut edges: Vec<_> = base
            .edges()
            .into_iter()
            .filter(|&(x, y, _)| !((x == a && y == b) || (x == b && y == a)))
            .collect();
        edges.push((a, r, len * frac));
        edges.push((r, b, len * (1.0 - frac)));
        let labels: Vec<_> = base.label.iter().enumerate().filter_map(|(i, l)| l.map(|l| (i, l))).collect();
        PhyloTree::from_edges(r + 1, &edges, &labels, Some(r), Validation { allow_multifurcation: false, allow_zero_length: true })
    }

    /// All-pairs path distances.
    pub fn distance_matrix(&self) -> DistanceMatrix {
        let n = self.adj.len();
        let mut d = vec![0.0; n * n];
        for u in 0..n {
            let row = self.distances_from(u);
            d[u * n..(u + 1) * n].copy_from_slice(&row);
        }
        DistanceMatrix { n, d }
    }
}

/// Dense all-pairs path distances of one tree.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, u: NodeId, v: NodeId) -> f64 {
        self.d[u * self.n + v]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}
