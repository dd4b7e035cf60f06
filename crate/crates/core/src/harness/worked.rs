//! The small-tree-on-a-long-edge instance in which a fake cherry is built
//! and later torn down.

use super::super::bcp::{BcpOutput, Phase};
use crate::treekit::{NodeId, PhyloTree, TreeError, Validation};

/// A complete tree with a small subtree grafted onto the middle of one
/// leaf edge.
#[derive(Debug, Clone)]
pub struct WorkedExample {
    pub tree: PhyloTree,
    /// Labels of the two leaves that look like a cherry but are not one.
    pub u: u32,
    pub v: u32,
}

/// Builds the instance.
///
/// The large part has a centre with three complete binary subtrees of
/// `depth` levels, every edge of length `g`.  Let `u`, `v` be the first two
/// sibling leaves and `v'` their parent.  The edge `(v', v)` is split at a
/// new node `x` into two halves of `g/2`, and a complete 3-level subtree is
/// hung from `x` whose top three edges (the one to `x` and the two below its
/// root) have length `g/2` and the rest `g`.
pub fn worked_example(depth: u32, g: f64) -> Result<WorkedExample, TreeError> {
    let mut edges: Vec<(NodeId, NodeId, f64)> = Vec::new();
    let mut labels: Vec<(NodeId, u32)> = Vec::new();
    let mut next = 0usize;
    let mut new_node = || {
        next += 1;
        next - 1
    };
    let center = new_node();
    // returns the leaves of a complete subtree below `top`, in order
    fn grow(
        top: NodeId,
        depth: u32,
        lens: &dyn Fn(u32) -> f64,
        level: u32,
        edges: &mut Vec<(NodeId, NodeId, f64)>,
        new_node: &mut dyn FnMut() -> NodeId,
        leaves: &mut Vec<NodeId>,
    ) {
        if level == depth {
            leaves.push(top);
            return;
        }
        for _ in 0..2 {
            let c = new_node();
            edges.push((top, c, lens(level)));
            grow(c, depth, lens, level + 1, edges, new_node, leaves);
        }
    }
    let mut big_leaves = Vec::new();
    for _ in 0..3 {
        let top = new_node();
        edges.push((center, top, g));
        grow(top, depth - 1, &|_| g, 0, &mut edges, &mut new_node, &mut big_leaves);
    }
    let (u, v) = (big_leaves[0], big_leaves[1]);
    let pos = edges.iter().position(|&(_, c, _)| c == v).expect("leaf edge");
    let v_prime = edges[pos].0;
    edges.remove(pos);
    let x = new_node();
    edges.push((v_prime, x, g / 2.0));
    edges.push((x, v, g / 2.0));
    let s = new_node();
    edges.push((x, s, g / 2.0));
    let mut small_leaves = Vec::new();
    grow(s, 3, &|level| if level == 0 { g / 2.0 } else { g }, 0, &mut edges, &mut new_node, &mut small_leaves);
    let mut label = 0u32;
    for &leaf in big_leaves.iter().chain(&small_leaves) {
        label += 1;
        labels.push((leaf, label));
    }
    let tree = PhyloTree::from_edges(next, &edges, &labels, None, Validation::default())?;
    let label_of = |x: NodeId| labels.iter().find(|&&(y, _)| y == x).unwrap().1;
    Ok(WorkedExample { tree, u: label_of(u), v: label_of(v) })
}

/// What a run did with the fake cherry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Narrative {
    /// Forest id of the cherry joining `u` and `v`, if one was added.
    pub fake: Option<NodeId>,
    pub added_in: Option<usize>,
    /// Iteration and collision pass in which it was removed.
    pub removed_in: Option<(usize, u8)>,
}

/// Finds the fake cherry in a run's trace.
pub fn narrative(ex: &WorkedExample, out: &BcpOutput) -> Narrative {
    let (fu, fv) = (ex.u as usize - 1, ex.v as usize - 1);
    let mut n = Narrative { fake: None, added_in: None, removed_in: None };
    for rec in &out.trace {
        match &rec.phase {
            Phase::Cherries { added } if n.fake.is_none() => {
                if let Some(c) = added.iter().find(|c| (c.v1, c.w1) == (fu.min(fv), fu.max(fv))) {
                    n.fake = Some(c.u);
                    n.added_in = Some(rec.iteration);
                }
            }
            Phase::Collisions { pass, removals } if n.fake.is_some() && n.removed_in.is_none()
                && removals.iter().any(|r| r.removed.contains(&n.fake.unwrap())) => {
                    n.removed_in = Some((rec.iteration, *pass));
                }
            _ => {}
        }
    }
    n
}
