use super::{NodeId, PhyloTree, TreeError};
use std::collections::BTreeSet;

/// The tree spanned by a node set, with degree-2 paths through nodes outside
/// the set contracted into single edges.  Node ids are those of the source
/// tree.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedTree {
    pub nodes: Vec<NodeId>,
    /// `(a, b, summed length)` with `a < b`, sorted.
    pub edges: Vec<(NodeId, NodeId, f64)>,
}

impl RestrictedTree {
    pub fn degree(&self, x: NodeId) -> usize {
        self.edges.iter().filter(|e| e.0 == x || e.1 == x).count()
    }

    /// Path length between two retained nodes.
    pub fn distance(&self, a: NodeId, b: NodeId) -> Option<f64> {
        if !self.nodes.contains(&a) || !self.nodes.contains(&b) {
            return None;
        }
        let mut stack = vec![(a, usize::MAX, 0.0)];
        while let Some((x, from, d)) = stack.pop() {
            if x == b {
                return Some(d);
            }
            for &(p, q, l) in &self.edges {
                let y = if p == x {
                    q
                } else if q == x {
                    p
                } else {
                    continue;
                };
                if y != from {
                    stack.push((y, x, d + l));
                }
            }
        }
        None
    }
}

/// Edges (as `(min, max)` pairs) of the minimal subtree connecting `nodes`,
/// together with its vertex set.
pub(crate) fn steiner(tree: &PhyloTree, nodes: &BTreeSet<NodeId>) -> (Vec<bool>, BTreeSet<(NodeId, NodeId)>) {
    let n = tree.n_nodes();
    let mut keep = vec![true; n];
    let mut deg: Vec<usize> = (0..n).map(|x| tree.neighbors(x).len()).collect();
    let mut stack: Vec<NodeId> = (0..n).filter(|&x| deg[x] <= 1 && !nodes.contains(&x)).collect();
    while let Some(x) = stack.pop() {
        if !keep[x] {
            continue;
        }
        keep[x] = false;
        for &(y, _) in tree.neighbors(x) {
            if keep[y] {
                deg[y] -= 1;
                if deg[y] <= 1 && !nodes.contains(&y) {
                    stack.push(y);
                }
            }
        }
    }
    let mut edges = BTreeSet::new();
    for x in 0..n {
        if keep[x] {
            for &(y, _) in tree.neighbors(x) {
                if keep[y] && x < y {
                    edges.insert((x, y));
                }
            }
        }
    }
    (keep, edges)
}

/// Restricts `tree` to the paths between members of `node_set`, then
/// contracts every degree-2 node that is not in the set.
pub fn restrict(tree: &PhyloTree, node_set: &[NodeId]) -> Result<RestrictedTree, TreeError> {
    if node_set.is_empty() {
        return Err(TreeError::EmptyNodeSet);
    }
    for &x in node_set {
        if x >= tree.n_nodes() {
            return Err(TreeError::UnknownNode(x));
        }
    }
    let set: BTreeSet<NodeId> = node_set.iter().copied().collect();
    let (keep, _) = steiner(tree, &set);
    let kept_nb = |x: NodeId| tree.neighbors(x).iter().filter(|(y, _)| keep[*y]).copied().collect::<Vec<_>>();
    let is_branch = |x: NodeId| set.contains(&x) || kept_nb(x).len() != 2;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for x in 0..tree.n_nodes() {
        if !keep[x] || !is_branch(x) {
            continue;
        }
        nodes.push(x);
        for (mut y, mut len) in kept_nb(x) {
            let mut prev = x;
            while !is_branch(y) {
                let (z, l) = kept_nb(y).into_iter().find(|(z, _)| *z != prev).expect("degree-2 node has a successor");
                prev = y;
                y = z;
                len += l;
            }
            if x < y {
                edges.push((x, y, len));
            }
        }
    }
    edges.sort_by_key(|a| (a.0, a.1));
    Ok(RestrictedTree { nodes, edges })
}

/// One of the three pairings of four nodes, with the length of the path that
/// separates the pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuartetSplit {
    /// Each pair sorted, pairs ordered by their first element.
    pub pairs: [(NodeId, NodeId); 2],
    pub internal_length: f64,
}

impl QuartetSplit {
    /// Whether `a` and `b` sit on the same side.
    pub fn together(&self, a: NodeId, b: NodeId) -> bool {
        let key = (a.min(b), a.max(b));
        self.pairs[0] == key || self.pairs[1] == key
    }
}

/// The split realised by four distinct nodes, or `None` when the quartet is
/// degenerate (a member lies on the path between two others, or the
/// separating path has zero length).
pub fn true_quartet_split(tree: &PhyloTree, q: [NodeId; 4]) -> Result<Option<QuartetSplit>, TreeError> {
    for (i, &a) in q.iter().enumerate() {
        if a >= tree.n_nodes() {
            return Err(TreeError::UnknownNode(a));
        }
        if q[..i].contains(&a) {
            return Err(TreeError::DuplicateNode(a));
        }
    }
    for i in 0..4 {
        for j in i + 1..4 {
            let path = tree.path(q[i], q[j])?;
            if q.iter().enumerate().any(|(m, x)| m != i && m != j && path.contains(x)) {
                return Ok(None);
            }
        }
    }
    let d = |i: usize, j: usize| tree.path_distance(q[i], q[j]).expect("checked ids");
    let pairings = [((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2))];
    let sums: Vec<f64> = pairings.iter().map(|&((a, b), (c, e))| d(a, b) + d(c, e)).collect();
    let (best, &min) = sums.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let other = sums.iter().enumerate().filter(|(i, _)| *i != best).map(|(_, s)| *s).fold(f64::INFINITY, f64::min);
    let m = (other - min) / 2.0;
    let scale = sums.iter().fold(1.0f64, |a, &b| a.max(b));
    if m <= 1e-12 * scale {
        return Ok(None);
    }
    let ((a, b), (c, e)) = pairings[best];
    let p1 = (q[a].min(q[b]), q[a].max(q[b]));
    let p2 = (q[c].min(q[e]), q[c].max(q[e]));
    let pairs = if p1 < p2 { [p1, p2] } else { [p2, p1] };
    Ok(Some(QuartetSplit { pairs, internal_length: m }))
}

/// True iff no edge lies both on a path between members of `t1` and on a path
/// between members of `t2`.
pub fn are_edge_disjoint(tree: &PhyloTree, t1: &[NodeId], t2: &[NodeId]) -> bool {
    let s1: BTreeSet<NodeId> = t1.iter().copied().collect();
    let s2: BTreeSet<NodeId> = t2.iter().copied().collect();
    if s1.is_empty() || s2.is_empty() {
        return true;
    }
    let (_, e1) = steiner(tree, &s1);
    let (_, e2) = steiner(tree, &s2);
    e1.is_disjoint(&e2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treekit::newick_parse;

    fn four_leaf() -> PhyloTree {
        newick_parse("((1:0.1,2:0.1):0.05,3:0.1,4:0.1);").unwrap()
    }

    fn leaves(t: &PhyloTree, labels: &[u32]) -> Vec<NodeId> {
        labels.iter().map(|&l| t.leaf(l).unwrap()).collect()
    }

    #[test]
    fn restriction_to_two_leaves_is_one_edge() {
        let t = four_leaf();
        let r = restrict(&t, &leaves(&t, &[1, 3])).unwrap();
        assert_eq!(r.nodes.len(), 2);
        assert_eq!(r.edges.len(), 1);
        assert!((r.edges[0].2 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn restriction_to_all_leaves_keeps_the_tree() {
        let t = four_leaf();
        let r = restrict(&t, &leaves(&t, &[1, 2, 3, 4])).unwrap();
        assert_eq!(r.nodes.len(), t.n_nodes());
        assert_eq!(r.edges.len(), t.n_nodes() - 1);
    }

    #[test]
    fn restriction_keeps_requested_degree_two_nodes() {
        // balanced 8-leaf tree; keep leaves 1, 2, 5 and the internal parent of 5 and 6
        let t = newick_parse("(((1:1,2:1):1,(3:1,4:1):1):1,((5:1,6:1):1,(7:1,8:1):1):1);").unwrap();
        let five = t.leaf(5).unwrap();
        let p56 = t.neighbors(five)[0].0;
        let set = vec![t.leaf(1).unwrap(), t.leaf(2).unwrap(), five, p56];
        let r = restrict(&t, &set).unwrap();
        // nodes: 1, 2, parent(1,2), p56, 5
        assert_eq!(r.nodes.len(), 5);
        assert_eq!(r.degree(p56), 2);
        let d = r.distance(t.leaf(1).unwrap(), five).unwrap();
        assert!((d - t.path_distance(t.leaf(1).unwrap(), five).unwrap()).abs() < 1e-12);
        assert!(matches!(restrict(&t, &[]), Err(TreeError::EmptyNodeSet)));
    }

    #[test]
    fn quartet_split_of_four_leaf_tree() {
        let t = four_leaf();
        let q = leaves(&t, &[1, 2, 3, 4]);
        let s = true_quartet_split(&t, [q[0], q[1], q[2], q[3]]).unwrap().unwrap();
        assert!(s.together(q[0], q[1]) && s.together(q[2], q[3]));
        assert!((s.internal_length - 0.05).abs() < 1e-12);
    }

    #[test]
    fn quartet_with_node_on_a_path_is_degenerate() {
        let t = four_leaf();
        let q = leaves(&t, &[1, 2, 3]);
        let mid = t.neighbors(q[0])[0].0; // parent of 1 and 2, on path 1..3
        assert_eq!(true_quartet_split(&t, [q[0], q[1], q[2], mid]).unwrap(), None);
        assert!(matches!(true_quartet_split(&t, [q[0], q[0], q[1], q[2]]), Err(TreeError::DuplicateNode(_))));
    }

    #[test]
    fn edge_disjointness_on_eight_leaf_tree() {
        // circular leaf order 1..8 with a central split {8,1,2,3} | {4,5,6,7}
        let t = newick_parse("(((1:1,2:1):1,(3:1,8:1):1):1,((4:1,5:1):1,(6:1,7:1):1):1);").unwrap();
        let l = |v: &[u32]| leaves(&t, v);
        assert!(are_edge_disjoint(&t, &l(&[1, 2, 3, 8]), &l(&[4, 5, 6, 7])));
        assert!(!are_edge_disjoint(&t, &l(&[1, 5, 6, 8]), &l(&[2, 3, 4, 7])));
        assert!(are_edge_disjoint(&t, &l(&[1]), &l(&[2])));
    }
}
