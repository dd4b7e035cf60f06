//! Combinatorial tests on the working distance table.
//!
//! Both tests read distances only; they never trigger sequence
//! reconstruction.

use crate::bcp::ForestState;
use crate::distances::{four_point, DistanceTable, ExtendedDistance};
use crate::treekit::NodeId;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuartetError {
    #[error("quartet repeats node {0}")]
    Repeated(NodeId),
    #[error("no distance between {0} and {1}")]
    Missing(NodeId, NodeId),
    #[error("node {0} has no parent in the forest")]
    NoParent(NodeId),
}

fn lookup(d: &DistanceTable, a: NodeId, b: NodeId) -> Result<ExtendedDistance, QuartetError> {
    d.get(a, b).ok_or(QuartetError::Missing(a, b))
}

/// Whether `v1 w1 | v2 w2` is the split of the quartet: its four-point
/// internal length is at least `f/2` (or infinite).
pub fn is_split(
    pair1: (NodeId, NodeId),
    pair2: (NodeId, NodeId),
    d: &DistanceTable,
    f: f64,
) -> Result<bool, QuartetError> {
    let (v1, w1) = pair1;
    let (v2, w2) = pair2;
    let q = [v1, w1, v2, w2];
    for i in 0..4 {
        if q[i + 1..].contains(&q[i]) {
            return Err(QuartetError::Repeated(q[i]));
        }
    }
    let nu = four_point(lookup(d, w1, w2)?, lookup(d, v1, v2)?, lookup(d, w1, v1)?, lookup(d, w2, v2)?);
    Ok(nu.finite().is_none_or(|x| x >= f / 2.0))
}

/// Outcome of testing whether a subtree collides into the edge `(u, v)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CollisionVerdict {
    pub collides: bool,
    /// The tested edge `(u, v)`, `u` the parent.
    pub edge: (NodeId, NodeId),
    /// Internal length of the quartet `x0 w | v1 v2`.
    pub nu: ExtendedDistance,
}

/// Tests whether the path from reference node `x0` enters the edge
/// `(u, v)` strictly inside: the quartet `x0 w | v1 v2` (with `w` the sister
/// of `v` and `v1, v2` the children of `v`, or `v` itself for a leaf) then
/// has an internal length `ν` noticeably shorter than the edge estimate,
/// `h_uv − ν > f/2`.  An infinite `ν` never signals a collision.
#[allow(clippy::too_many_arguments)]
pub fn is_collision(
    x0: NodeId,
    v: NodeId,
    w: NodeId,
    u: NodeId,
    h_uv: f64,
    forest: &ForestState,
    d: &DistanceTable,
    f: f64,
) -> Result<CollisionVerdict, QuartetError> {
    if forest.parent(v) != Some(u) || forest.sister(v) != Some(w) {
        return Err(QuartetError::NoParent(v));
    }
    let [v1, v2] = forest.children(v).unwrap_or([v, v]);
    let nu = four_point(lookup(d, v1, x0)?, lookup(d, v2, w)?, lookup(d, v1, v2)?, lookup(d, x0, w)?);
    let collides = nu.finite().is_some_and(|x| h_uv - x > f / 2.0);
    Ok(CollisionVerdict { collides, edge: (u, v), nu })
}
