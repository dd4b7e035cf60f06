use super::audit::{AuditReport, Auditor};
use super::steps::{cherry_candidates, detect_collision, update_metric};
use super::{Channel, ForestError, ForestState, PerfectChannel, StatisticalChannel};
use crate::distances::{DistanceTable, ExtendedDistance};
use crate::evolve::CharacterMatrix;
use crate::params::AlgoParams;
use crate::quartets::QuartetError;
use crate::seq::BitSeq;
use crate::treekit::{NodeId, PhyloTree, TreeError, Validation};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BcpError {
    #[error("need at least 2 leaves, got {0}")]
    TooFewLeaves(usize),
    #[error("character matrix must be over {{-1,+1}}; reduce JC data first")]
    WrongAlphabet,
    #[error("leaf labels must be exactly 1..={0}")]
    BadLabels(usize),
    #[error("true tree has {tree} leaves but the matrix has {matrix}")]
    LeafCountMismatch { tree: usize, matrix: usize },
    #[error("iteration {iteration}: no cherry added and no collision removed with {roots} roots left")]
    NonConvergence { iteration: usize, roots: usize, partial: Box<Partial> },
    #[error("no termination after {limit} iterations")]
    IterationLimit { limit: usize, partial: Box<Partial> },
    #[error(transparent)]
    Quartet(#[from] QuartetError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Where distances come from.
#[derive(Debug, Clone)]
pub enum MetricMode {
    /// Reconstructed sequences; `seed` keys the majority tie bits.
    Statistical { seed: u64 },
    /// Exact path distances in the given true tree.
    Perfect(PhyloTree),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// True tree to audit the run against.
    pub audit: Option<PhyloTree>,
    /// Iteration cap; defaults to `4n + 16`.
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AddedCherry {
    pub v1: NodeId,
    pub w1: NodeId,
    pub u: NodeId,
    pub l_v: f64,
    pub l_w: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Removal {
    /// Reference root and scanned root.
    pub u0: NodeId,
    pub u1: NodeId,
    /// Lower end of the edge collided into.
    pub v: NodeId,
    pub removed: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Cherries { added: Vec<AddedCherry> },
    Collisions { pass: u8, removals: Vec<Removal> },
    Termination,
}

/// One phase of one iteration.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    #[serde(flatten)]
    pub phase: Phase,
    /// Number of roots after the phase.
    pub roots: usize,
}

/// State of an aborted run, for diagnostics.
#[derive(Debug, Clone)]
pub struct Partial {
    pub trace: Vec<TraceRecord>,
    pub forest: ForestState,
    pub audit: Option<AuditReport>,
}

#[derive(Debug, Clone)]
pub struct BcpOutput {
    /// Unrooted reconstruction; lengths are the edge estimates.
    pub tree: PhyloTree,
    pub trace: Vec<TraceRecord>,
    pub iterations: usize,
    /// The forest just before the final join.
    pub forest: ForestState,
    pub audit: Option<AuditReport>,
}

fn leaf_rows(chars: &CharacterMatrix) -> Result<Vec<BitSeq>, BcpError> {
    let n = chars.n();
    let mut rows: Vec<Option<BitSeq>> = vec![None; n];
    for (i, &l) in chars.labels().iter().enumerate() {
        let idx = (l as usize).checked_sub(1).filter(|&x| x < n).ok_or(BcpError::BadLabels(n))?;
        let row = chars.cfn_row(i).ok_or(BcpError::WrongAlphabet)?;
        if rows[idx].replace(row.clone()).is_some() {
            return Err(BcpError::BadLabels(n));
        }
    }
    rows.into_iter().map(|r| r.ok_or(BcpError::BadLabels(n))).collect()
}

/// Runs blindfolded cherry picking on a CFN character matrix.
///
/// In perfect mode the matrix only supplies the leaf count.
pub fn bcp_run(
    chars: &CharacterMatrix,
    params: &AlgoParams,
    mode: MetricMode,
    options: &RunOptions,
) -> Result<BcpOutput, BcpError> {
    let n = chars.n();
    if n < 2 {
        return Err(BcpError::TooFewLeaves(n));
    }
    let check_tree = |t: &PhyloTree| {
        if t.n_leaves() == n {
            Ok(())
        } else {
            Err(BcpError::LeafCountMismatch { tree: t.n_leaves(), matrix: n })
        }
    };
    let mut channel: Box<dyn Channel> = match mode {
        MetricMode::Statistical { seed } => {
            Box::new(StatisticalChannel::new(leaf_rows(chars)?, params.majority.levels, seed))
        }
        MetricMode::Perfect(tree) => {
            check_tree(&tree)?;
            Box::new(PerfectChannel::new(tree))
        }
    };
    let mut auditor = match &options.audit {
        Some(t) => {
            check_tree(t)?;
            Some(Auditor::new(t, params))
        }
        None => None,
    };
    let max_iterations = options.max_iterations.unwrap_or(4 * n + 16);

    let mut forest = ForestState::with_leaves(n);
    channel.prepare(&forest);
    if let Some(a) = auditor.as_mut() {
        a.place(&forest);
    }
    let mut d = update_metric(&forest, channel.as_ref(), params);
    let mut trace = Vec::new();
    let mut iteration = 0;
    while forest.n_roots() > 3 {
        iteration += 1;
        if iteration > max_iterations {
            let partial = Box::new(Partial { trace, forest, audit: auditor.map(|a| a.finish(iteration, n)) });
            return Err(BcpError::IterationLimit { limit: max_iterations, partial });
        }
        forest.set_iteration(iteration);

        let mut added = Vec::new();
        for c in cherry_candidates(&forest, &d, channel.as_ref(), params)? {
            if forest.is_root(c.v1) && forest.is_root(c.w1) {
                let u = forest.add_cherry(c.v1, c.w1, c.l_v, c.l_w)?;
                added.push(AddedCherry { v1: c.v1, w1: c.w1, u, l_v: c.l_v, l_w: c.l_w });
            }
        }
        trace.push(TraceRecord { iteration, phase: Phase::Cherries { added: added.clone() }, roots: forest.n_roots() });
        channel.prepare(&forest);
        if let Some(a) = auditor.as_mut() {
            a.place(&forest);
        }
        d = update_metric(&forest, channel.as_ref(), params);

        let mut removed_any = false;
        for pass in 1..=2u8 {
            let removals = collision_pass(&mut forest, &d, params, auditor.as_mut())?;
            removed_any |= !removals.is_empty();
            trace.push(TraceRecord { iteration, phase: Phase::Collisions { pass, removals }, roots: forest.n_roots() });
        }
        if let Some(a) = auditor.as_mut() {
            a.check_iteration(&forest);
        }
        if added.is_empty() && !removed_any {
            let roots = forest.n_roots();
            let partial = Box::new(Partial { trace, forest, audit: auditor.map(|a| a.finish(iteration, n)) });
            return Err(BcpError::NonConvergence { iteration, roots, partial });
        }
    }
    trace.push(TraceRecord { iteration, phase: Phase::Termination, roots: forest.n_roots() });
    let tree = join(&forest, &d)?;
    let audit = auditor.map(|a| a.finish(iteration, n));
    Ok(BcpOutput { tree, trace, iterations: iteration, forest, audit })
}

/// One scan over ordered root pairs, removing each collision as found.
fn collision_pass(
    forest: &mut ForestState,
    d: &DistanceTable,
    params: &AlgoParams,
    mut auditor: Option<&mut Auditor>,
) -> Result<Vec<Removal>, BcpError> {
    let roots = forest.roots();
    let mut removals = Vec::new();
    for &u0 in &roots {
        for &u1 in &roots {
            if u0 == u1 || forest.is_leaf(u1) || !forest.is_root(u0) || !forest.is_root(u1) {
                continue;
            }
            if let Some(v) = detect_collision(u0, u1, forest, d, params)? {
                if let Some(a) = auditor.as_deref_mut() {
                    a.check_removal(forest, u0, u1, v);
                }
                let removed = forest.remove_collision(v);
                removals.push(Removal { u0, u1, v, removed });
            }
        }
    }
    Ok(removals)
}

fn length(x: Option<ExtendedDistance>) -> f64 {
    x.and_then(|x| x.finite()).unwrap_or(0.0).max(0.0)
}

/// Joins the remaining roots: a star for three, an edge for two, and the
/// root suppressed when one is left.  Two leaves give a rooted cherry.
fn join(forest: &ForestState, d: &DistanceTable) -> Result<PhyloTree, BcpError> {
    let alive = forest.alive_nodes();
    let mut index = vec![usize::MAX; forest.id_bound()];
    for (i, &x) in alive.iter().enumerate() {
        index[x] = i;
    }
    let mut edges = Vec::new();
    for &x in &alive {
        if let Some(p) = forest.parent(x) {
            edges.push((index[p], index[x], forest.h(x).max(0.0)));
        }
    }
    let labels: Vec<(NodeId, u32)> =
        alive.iter().filter(|&&x| forest.is_leaf(x)).map(|&x| (index[x], forest.label(x).unwrap())).collect();
    let roots = forest.roots();
    let mut n_nodes = alive.len();
    let mut root = None;
    let dd = |a: NodeId, b: NodeId| length(d.get(a, b));
    match roots[..] {
        [a, b, c] => {
            let center = n_nodes;
            n_nodes += 1;
            let (ab, ac, bc) = (dd(a, b), dd(a, c), dd(b, c));
            edges.push((center, index[a], ((ab + ac - bc) / 2.0).max(0.0)));
            edges.push((center, index[b], ((ab + bc - ac) / 2.0).max(0.0)));
            edges.push((center, index[c], ((ac + bc - ab) / 2.0).max(0.0)));
        }
        [a, b] if forest.is_leaf(a) && forest.is_leaf(b) => {
            let r = n_nodes;
            n_nodes += 1;
            let half = dd(a, b) / 2.0;
            edges.push((r, index[a], half));
            edges.push((r, index[b], half));
            root = Some(r);
        }
        [a, b] => edges.push((index[a], index[b], dd(a, b))),
        [r] => {
            let [c1, c2] = forest.children(r).expect("a single root with n ≥ 2 has children");
            let len = forest.h(c1) + forest.h(c2);
            edges.retain(|&(p, _, _)| p != index[r]);
            edges.push((index[c1], index[c2], len.max(0.0)));
            // drop the root slot by moving the last node into it
            let last = n_nodes - 1;
            let slot = index[r];
            for e in edges.iter_mut() {
                if e.0 == last {
                    e.0 = slot;
                }
                if e.1 == last {
                    e.1 = slot;
                }
            }
            let labels: Vec<(NodeId, u32)> =
                labels.iter().map(|&(x, l)| (if x == last { slot } else { x }, l)).collect();
            return Ok(PhyloTree::from_edges(
                n_nodes - 1,
                &edges,
                &labels,
                None,
                Validation { allow_multifurcation: false, allow_zero_length: true },
            )?);
        }
        _ => unreachable!("join is called with at most three roots"),
    }
    Ok(PhyloTree::from_edges(
        n_nodes,
        &edges,
        &labels,
        root,
        Validation { allow_multifurcation: false, allow_zero_length: true },
    )?)
}
