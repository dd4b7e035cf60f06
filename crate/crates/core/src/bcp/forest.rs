use crate::treekit::NodeId;
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ForestError {
    #[error("node {0} is not a root of the forest")]
    NotARoot(NodeId),
    #[error("node {0} is not in the forest")]
    Absent(NodeId),
    #[error("a cherry needs two distinct roots, got {0} twice")]
    SameRoot(NodeId),
}

/// The growing rooted forest.
///
/// Node ids are never reused: leaves are `0..n` (label `id + 1`) and every
/// cherry gets a fresh id.  A removed node keeps its slot but is marked dead,
/// so anything cached by id stays valid for the nodes that survive.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestState {
    n_leaves: usize,
    parent: Vec<Option<NodeId>>,
    children: Vec<Option<[NodeId; 2]>>,
    /// Estimated length of the edge from a node to its parent.
    h: Vec<f64>,
    alive: Vec<bool>,
    roots: BTreeSet<NodeId>,
    iteration: usize,
}

impl ForestState {
    /// `n` singleton trees, one per leaf.
    pub fn with_leaves(n: usize) -> Self {
        ForestState {
            n_leaves: n,
            parent: vec![None; n],
            children: vec![None; n],
            h: vec![0.0; n],
            alive: vec![true; n],
            roots: (0..n).collect(),
            iteration: 0,
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    /// One past the largest id ever issued.
    pub fn id_bound(&self) -> usize {
        self.parent.len()
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn set_iteration(&mut self, i: usize) {
        self.iteration = i;
    }

    pub fn contains(&self, x: NodeId) -> bool {
        self.alive.get(x).copied().unwrap_or(false)
    }

    pub fn is_leaf(&self, x: NodeId) -> bool {
        x < self.n_leaves
    }

    /// Leaf label of a leaf node.
    pub fn label(&self, x: NodeId) -> Option<u32> {
        self.is_leaf(x).then_some(x as u32 + 1)
    }

    pub fn is_root(&self, x: NodeId) -> bool {
        self.roots.contains(&x)
    }

    /// Current roots in increasing id order.
    pub fn roots(&self) -> Vec<NodeId> {
        self.roots.iter().copied().collect()
    }

    pub fn n_roots(&self) -> usize {
        self.roots.len()
    }

    pub fn children(&self, x: NodeId) -> Option<[NodeId; 2]> {
        self.children.get(x).copied().flatten()
    }

    pub fn parent(&self, x: NodeId) -> Option<NodeId> {
        self.parent.get(x).copied().flatten()
    }

    /// The other child of `x`'s parent.
    pub fn sister(&self, x: NodeId) -> Option<NodeId> {
        let [a, b] = self.children(self.parent(x)?)?;
        Some(if a == x { b } else { a })
    }

    /// Estimated length of the edge above `x` (0 for roots).
    pub fn h(&self, x: NodeId) -> f64 {
        if self.parent(x).is_some() {
            self.h[x]
        } else {
            0.0
        }
    }

    pub fn root_of(&self, mut x: NodeId) -> NodeId {
        while let Some(p) = self.parent(x) {
            x = p;
        }
        x
    }

    /// Whether `a` lies on the path from `d` up to its root (including `d`).
    pub fn is_ancestor(&self, a: NodeId, mut d: NodeId) -> bool {
        loop {
            if d == a {
                return true;
            }
            match self.parent(d) {
                Some(p) => d = p,
                None => return false,
            }
        }
    }

    /// Nodes of the subtree below `x` in breadth-first order, children in
    /// stored order.
    pub fn subtree_bfs(&self, x: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([x]);
        while let Some(y) = queue.pop_front() {
            out.push(y);
            if let Some([a, b]) = self.children(y) {
                queue.push_back(a);
                queue.push_back(b);
            }
        }
        out
    }

    /// Leaves of the subtree below `x`.
    pub fn subtree_leaves(&self, x: NodeId) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.subtree_bfs(x).into_iter().filter(|&y| self.is_leaf(y)).collect();
        v.sort_unstable();
        v
    }

    /// All live nodes in increasing id order.
    pub fn alive_nodes(&self) -> Vec<NodeId> {
        (0..self.id_bound()).filter(|&x| self.alive[x]).collect()
    }

    /// Joins roots `v` and `w` under a fresh node with edge estimates
    /// `l_v`, `l_w`, and returns the new root.
    pub fn add_cherry(&mut self, v: NodeId, w: NodeId, l_v: f64, l_w: f64) -> Result<NodeId, ForestError> {
        if v == w {
            return Err(ForestError::SameRoot(v));
        }
        for x in [v, w] {
            if !self.is_root(x) {
                return Err(ForestError::NotARoot(x));
            }
        }
        let u = self.id_bound();
        self.parent.push(None);
        self.children.push(Some([v, w]));
        self.h.push(0.0);
        self.alive.push(true);
        self.parent[v] = Some(u);
        self.parent[w] = Some(u);
        self.h[v] = l_v;
        self.h[w] = l_w;
        self.roots.remove(&v);
        self.roots.remove(&w);
        self.roots.insert(u);
        Ok(u)
    }

    /// Deletes every proper ancestor of `v` together with the edges below
    /// them; the subtrees hanging off that path become separate trees.
    /// Returns the removed nodes from `v`'s parent upwards.  Absent nodes and
    /// roots leave the forest unchanged.
    pub fn remove_collision(&mut self, v: NodeId) -> Vec<NodeId> {
        if !self.contains(v) || self.is_root(v) {
            return Vec::new();
        }
        let mut removed = Vec::new();
        let mut x = v;
        while let Some(p) = self.parent(x) {
            let [a, b] = self.children[p].take().expect("a parent has children");
            for c in [a, b] {
                self.parent[c] = None;
                self.h[c] = 0.0;
                self.roots.insert(c);
            }
            self.alive[p] = false;
            removed.push(p);
            // p's own parent link is cleared when its parent is processed
            x = p;
        }
        for &p in &removed {
            self.parent[p] = None;
            self.roots.remove(&p);
        }
        removed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cherry_bookkeeping() {
        let mut f = ForestState::with_leaves(4);
        let u = f.add_cherry(0, 1, 0.1, 0.2).unwrap();
        assert_eq!(f.n_roots(), 3);
        assert_eq!(f.children(u), Some([0, 1]));
        assert_eq!(f.h(1), 0.2);
        assert_eq!(f.sister(0), Some(1));
        let u2 = f.add_cherry(2, 3, 0.1, 0.1).unwrap();
        let top = f.add_cherry(u, u2, 0.05, 0.05).unwrap();
        assert_eq!(f.n_roots(), 1);
        assert_eq!(f.alive_nodes().len(), 7);
        assert_eq!(f.root_of(3), top);
        assert!(f.add_cherry(0, 2, 0.1, 0.1).is_err());
        assert_eq!(f.subtree_bfs(top), vec![top, u, u2, 0, 1, 2, 3]);
    }

    #[test]
    fn removing_below_a_root() {
        let mut f = ForestState::with_leaves(2);
        let u = f.add_cherry(0, 1, 0.1, 0.1).unwrap();
        assert!(f.remove_collision(u).is_empty());
        assert_eq!(f.remove_collision(0), vec![u]);
        assert_eq!(f.roots(), vec![0, 1]);
        assert!(!f.contains(u));
        assert_eq!(f.h(0), 0.0);
    }

    #[test]
    fn removal_detaches_the_whole_path() {
        let mut f = ForestState::with_leaves(5);
        let a = f.add_cherry(0, 1, 0.1, 0.1).unwrap();
        let b = f.add_cherry(a, 2, 0.1, 0.1).unwrap();
        let c = f.add_cherry(b, 3, 0.1, 0.1).unwrap();
        assert_eq!(f.remove_collision(1), vec![a, b, c]);
        assert_eq!(f.roots(), vec![0, 1, 2, 3, 4]);
        assert_eq!(f.alive_nodes(), vec![0, 1, 2, 3, 4]);
        assert!(f.remove_collision(99).is_empty());
    }

    #[test]
    fn removal_keeps_sibling_subtrees() {
        let mut f = ForestState::with_leaves(4);
        let a = f.add_cherry(0, 1, 0.1, 0.1).unwrap();
        let b = f.add_cherry(2, 3, 0.1, 0.1).unwrap();
        let c = f.add_cherry(a, b, 0.1, 0.1).unwrap();
        assert_eq!(f.remove_collision(a), vec![c]);
        assert_eq!(f.roots(), vec![a, b]);
        assert_eq!(f.children(a), Some([0, 1]));
    }
}
