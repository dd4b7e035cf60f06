use super::ForestState;
use crate::distances::{distance_estimate, distorted_metric_with, is_short, round_to_delta, DistanceTable, ExtendedDistance, NodeMetric};
use crate::params::AlgoParams;
use crate::quartets::{is_collision, is_split, QuartetError};
use crate::treekit::NodeId;
use rayon::prelude::*;

/// Why a candidate pair was turned down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum CherryRejection {
    /// The two roots are farther apart than `2g + ε`.
    TooFar,
    /// No pair of other roots lies within `5g + ε` of the candidate.
    NoWitnesses,
    /// Some nearby pair of roots does not split from the candidate.
    NotSplit { v2: NodeId, w2: NodeId },
    /// One of the two edge-length tests failed.
    LongEdge,
}

/// Result of testing whether two roots form a cherry of the remaining forest.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CherryCandidate {
    pub v1: NodeId,
    pub w1: NodeId,
    pub verdict: Result<(), CherryRejection>,
    pub l_v: f64,
    pub l_w: f64,
    /// The reference root used by both edge-length tests.
    pub z0: Option<NodeId>,
}

fn d_of(d: &DistanceTable, a: NodeId, b: NodeId) -> Result<ExtendedDistance, QuartetError> {
    d.get(a, b).ok_or(QuartetError::Missing(a, b))
}

/// Tests the roots `v1`, `w1` as a cherry.
///
/// 1. `D(v1, w1) ≤ 2g + ε`.
/// 2. Among root pairs disjoint from `{v1, w1}` whose six pairwise distances
///    with `v1, w1` are all at most `5g + ε`, there is at least one, and
///    each is split from `v1 w1`.
/// 3. With `z0` the root nearest to `v1` (smallest id on ties), the internal
///    lengths of `(children of v1) | (w1, z0)` and `(children of w1) |
///    (v1, z0)` are both short; they become the edge estimates.
///
/// The single reference `z0` serves both edge tests so that the two
/// estimates measure to the same junction.
pub fn local_cherry(
    v1: NodeId,
    w1: NodeId,
    forest: &ForestState,
    d: &DistanceTable,
    metric: &dyn NodeMetric,
    params: &AlgoParams,
) -> Result<CherryCandidate, QuartetError> {
    let mut out = CherryCandidate { v1, w1, verdict: Ok(()), l_v: 0.0, l_w: 0.0, z0: None };
    let near = |x: ExtendedDistance, bound: f64| x.finite().is_some_and(|v| v <= bound);
    if !near(d_of(d, v1, w1)?, 2.0 * params.g + params.eps) {
        out.verdict = Err(CherryRejection::TooFar);
        return Ok(out);
    }
    let roots: Vec<NodeId> = forest.roots().into_iter().filter(|&r| r != v1 && r != w1).collect();
    let witness_bound = 5.0 * params.g + params.eps;
    // roots close to both v1 and w1; only these can be in a witness pair
    let mut close = Vec::new();
    for &r in &roots {
        if near(d_of(d, v1, r)?, witness_bound) && near(d_of(d, w1, r)?, witness_bound) {
            close.push(r);
        }
    }
    let mut any = false;
    for (i, &v2) in close.iter().enumerate() {
        for &w2 in &close[i + 1..] {
            if !near(d_of(d, v2, w2)?, witness_bound) {
                continue;
            }
            any = true;
            if !is_split((v1, w1), (v2, w2), d, params.f)? {
                out.verdict = Err(CherryRejection::NotSplit { v2, w2 });
                return Ok(out);
            }
        }
    }
    if !any {
        out.verdict = Err(CherryRejection::NoWitnesses);
        return Ok(out);
    }
    let mut z0 = None;
    let mut best = ExtendedDistance::INF;
    for &r in &roots {
        let x = d_of(d, v1, r)?;
        if z0.is_none() || x < best {
            z0 = Some(r);
            best = x;
        }
    }
    let z0 = z0.expect("witnesses exist, so other roots exist");
    out.z0 = Some(z0);
    let grid = params.grid();
    let kids = |x: NodeId| forest.children(x).unwrap_or([x, x]);
    let [x1, x2] = kids(v1);
    let [y1, y2] = kids(w1);
    let tol = params.eps / 16.0;
    let (b_v, l_v) = is_short((x1, x2), (w1, z0), metric, params.r_acc, params.g, tol, grid.as_ref());
    let (b_w, l_w) = is_short((y1, y2), (v1, z0), metric, params.r_acc, params.g, tol, grid.as_ref());
    if !(b_v && b_w) {
        out.verdict = Err(CherryRejection::LongEdge);
        return Ok(out);
    }
    out.l_v = l_v.value();
    out.l_w = l_w.value();
    Ok(out)
}

/// Scans `T_{u1}` below its root in reverse breadth-first order for an edge
/// `(u, v)` that both children of `u0` (or `u0` itself, if a leaf) see as
/// collided into.  Returns the lower endpoint `v` of the first such edge.
pub fn detect_collision(
    u0: NodeId,
    u1: NodeId,
    forest: &ForestState,
    d: &DistanceTable,
    params: &AlgoParams,
) -> Result<Option<NodeId>, QuartetError> {
    let [x0, y0] = forest.children(u0).unwrap_or([u0, u0]);
    let order = forest.subtree_bfs(u1);
    for &v in order.iter().skip(1).rev() {
        let u = forest.parent(v).ok_or(QuartetError::NoParent(v))?;
        let w = forest.sister(v).ok_or(QuartetError::NoParent(v))?;
        let h = forest.h(v);
        let b_x = is_collision(x0, v, w, u, h, forest, d, params.f)?.collides;
        if b_x && is_collision(y0, v, w, u, h, forest, d, params.f)?.collides {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

/// Sum of edge estimates on the forest path between two nodes of one tree.
fn h_path(forest: &ForestState, a: NodeId, b: NodeId) -> f64 {
    let up = |mut x: NodeId| {
        let mut acc = vec![(x, 0.0)];
        let mut total = 0.0;
        while let Some(p) = forest.parent(x) {
            total += forest.h(x);
            x = p;
            acc.push((x, total));
        }
        acc
    };
    let pa = up(a);
    let pb = up(b);
    for &(x, da) in &pa {
        if let Some(&(_, db)) = pb.iter().find(|(y, _)| *y == x) {
            return da + db;
        }
    }
    unreachable!("nodes share a tree")
}

/// The working metric after cherry addition.
///
/// Pairs in different trees get the multiple-test distance; pairs in the
/// same tree (including ancestor pairs) get sums of edge estimates along the
/// forest path.  In Δ-mode both are rounded to the grid.
pub fn update_metric(forest: &ForestState, metric: &dyn NodeMetric, params: &AlgoParams) -> DistanceTable {
    let alive = forest.alive_nodes();
    let root: Vec<NodeId> = (0..forest.id_bound()).map(|x| if forest.contains(x) { forest.root_of(x) } else { x }).collect();
    let grid = params.grid();
    // child-level estimates are shared by many node pairs: compute each once
    let mut de_index = vec![usize::MAX; forest.id_bound()];
    let de_nodes: Vec<NodeId> = alive.clone();
    for (i, &x) in de_nodes.iter().enumerate() {
        de_index[x] = i;
    }
    let m = de_nodes.len();
    let de_vals: Vec<f64> = (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            let (a, b) = (de_nodes[i], de_nodes[j]);
            if i >= j || root[a] == root[b] {
                f64::NAN
            } else {
                distance_estimate(a, b, forest, metric, params.r_acc).value()
            }
        })
        .collect();
    let de = |a: NodeId, b: NodeId| {
        let (i, j) = (de_index[a].min(de_index[b]), de_index[a].max(de_index[b]));
        let v = de_vals[i * m + j];
        if v.is_nan() {
            distance_estimate(a, b, forest, metric, params.r_acc)
        } else {
            ExtendedDistance::new(v)
        }
    };
    let pairs: Vec<(NodeId, NodeId)> =
        alive.iter().enumerate().flat_map(|(i, &a)| alive[i + 1..].iter().map(move |&b| (a, b))).collect();
    let vals: Vec<ExtendedDistance> = pairs
        .par_iter()
        .map(|&(a, b)| {
            if root[a] == root[b] {
                round_to_delta(ExtendedDistance::new(h_path(forest, a, b)), grid.as_ref())
            } else {
                distorted_metric_with(a, b, forest, &de, params.eps, grid.as_ref())
            }
        })
        .collect();
    let mut table = DistanceTable::over(&alive);
    for ((a, b), v) in pairs.into_iter().zip(vals) {
        table.set(a, b, v);
    }
    table
}

/// Evaluates all root pairs in parallel and returns the accepted ones in
/// increasing `(v1, w1)` order.
pub fn cherry_candidates(
    forest: &ForestState,
    d: &DistanceTable,
    metric: &dyn NodeMetric,
    params: &AlgoParams,
) -> Result<Vec<CherryCandidate>, QuartetError> {
    let roots = forest.roots();
    let pairs: Vec<(NodeId, NodeId)> =
        roots.iter().enumerate().flat_map(|(i, &a)| roots[i + 1..].iter().map(move |&b| (a, b))).collect();
    let results: Result<Vec<CherryCandidate>, QuartetError> =
        pairs.par_iter().map(|&(v1, w1)| local_cherry(v1, w1, forest, d, metric, params)).collect();
    Ok(results?.into_iter().filter(|c| c.verdict.is_ok()).collect())
}
