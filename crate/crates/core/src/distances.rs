//! Distance estimation between reconstructed sequences.
//!
//! Pairwise log-correlation distances between reconstructed sequences carry a
//! bias from the imperfect ancestral estimates.  The four-point combination
//! cancels that bias; the quartet-based routines here apply it with an
//! accuracy cutoff and a multiple test that flags pairs whose estimates
//! cannot be trusted.

use crate::bcp::ForestState;
use crate::evolve::DeltaGrid;
use crate::seq::BitSeq;
use crate::treekit::NodeId;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("sequences have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("empty sequences")]
    Empty,
}

/// A distance in `[−∞, +∞)` extended with `+∞`; never NaN.
///
/// Finite values may be negative: four-point combinations of noisy or
/// mismatched estimates do not respect the metric axioms.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
pub struct ExtendedDistance(f64);

impl ExtendedDistance {
    pub const INF: ExtendedDistance = ExtendedDistance(f64::INFINITY);
    pub const ZERO: ExtendedDistance = ExtendedDistance(0.0);

    /// Wraps a finite value or `+∞`.
    ///
    /// # Panics
    /// On NaN or `−∞`.
    pub fn new(v: f64) -> Self {
        assert!(!v.is_nan() && v != f64::NEG_INFINITY, "invalid extended distance {v}");
        ExtendedDistance(v)
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_inf(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The finite value, if any.
    pub fn finite(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }
}

impl fmt::Display for ExtendedDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_inf() {
            write!(f, "inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// `−½ ln` of the positive part of the empirical correlation of `a` and `b`;
/// `+∞` when the correlation is not positive.
pub fn dist_hat(a: &BitSeq, b: &BitSeq) -> Result<ExtendedDistance, DistanceError> {
    if a.len() != b.len() {
        return Err(DistanceError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(DistanceError::Empty);
    }
    Ok(corr_to_distance(a.dot(b) as f64 / a.len() as f64))
}

/// `−½ ln c` for `c > 0`, else `+∞`.
pub fn corr_to_distance(c: f64) -> ExtendedDistance {
    if c > 0.0 {
        ExtendedDistance::new(-0.5 * c.ln())
    } else {
        ExtendedDistance::INF
    }
}

/// Four-point internal length `½(d(v1,v2) + d(w1,w2) − d(v1,w1) − d(v2,w2))`
/// of the split `v1 w1 | v2 w2`; `+∞` if any input is.
pub fn four_point(
    d_v1v2: ExtendedDistance,
    d_w1w2: ExtendedDistance,
    d_v1w1: ExtendedDistance,
    d_v2w2: ExtendedDistance,
) -> ExtendedDistance {
    let all = [d_v1v2, d_w1w2, d_v1w1, d_v2w2];
    if all.iter().any(|d| d.is_inf()) {
        return ExtendedDistance::INF;
    }
    ExtendedDistance::new(0.5 * (d_v1v2.0 + d_w1w2.0 - d_v1w1.0 - d_v2w2.0))
}

/// [`four_point`] on empirical distances between four sequences.
pub fn int_hat(sv1: &BitSeq, sw1: &BitSeq, sv2: &BitSeq, sw2: &BitSeq) -> Result<ExtendedDistance, DistanceError> {
    Ok(four_point(dist_hat(sv1, sv2)?, dist_hat(sw1, sw2)?, dist_hat(sv1, sw1)?, dist_hat(sv2, sw2)?))
}

/// Distance between the sequences attached to two forest nodes: empirical
/// distances between reconstructed sequences, true distances in the
/// perfect-information mode, or exact expectations in analytic mode.
pub trait NodeMetric: Sync {
    fn node_dist(&self, a: NodeId, b: NodeId) -> ExtendedDistance;
}

fn metric_dist(metric: &dyn NodeMetric, a: NodeId, b: NodeId) -> ExtendedDistance {
    if a == b {
        ExtendedDistance::ZERO
    } else {
        metric.node_dist(a, b)
    }
}

/// Four-point estimate for the quartet `(v1, w1 | v2, w2)` after the
/// accuracy cutoff: `+∞` if any of the six pairwise distances exceeds `r_acc`.
pub fn cutoff_four_point(metric: &dyn NodeMetric, q: [NodeId; 4], r_acc: f64) -> ExtendedDistance {
    let [v1, w1, v2, w2] = q;
    let d = |a, b| metric_dist(metric, a, b);
    let pairs = [d(v1, v2), d(w1, w2), d(v1, w1), d(v2, w2), d(v1, w2), d(w1, v2)];
    if pairs.iter().any(|x| x.is_inf() || x.0 > r_acc) {
        return ExtendedDistance::INF;
    }
    four_point(pairs[0], pairs[1], pairs[2], pairs[3])
}

fn children_or_self(forest: &ForestState, x: NodeId) -> [NodeId; 2] {
    forest.children(x).unwrap_or([x, x])
}

/// Distance between `u1` and `u2` from the sequences reconstructed at their
/// children (a leaf stands in for both of its children).
pub fn distance_estimate(
    u1: NodeId,
    u2: NodeId,
    forest: &ForestState,
    metric: &dyn NodeMetric,
    r_acc: f64,
) -> ExtendedDistance {
    let [v1, w1] = children_or_self(forest, u1);
    let [v2, w2] = children_or_self(forest, u2);
    cutoff_four_point(metric, [v1, w1, v2, w2], r_acc)
}

/// Whether the internal path of the quartet `pair1 | pair2` is shorter than
/// `g + tol`, with the (Δ-rounded, when `grid` is set) length estimate.
/// Returns `(false, 0)` when the estimate is rejected or too long.
pub fn is_short(
    pair1: (NodeId, NodeId),
    pair2: (NodeId, NodeId),
    metric: &dyn NodeMetric,
    r_acc: f64,
    g: f64,
    tol: f64,
    grid: Option<&DeltaGrid>,
) -> (bool, ExtendedDistance) {
    let nu = round_to_delta(cutoff_four_point(metric, [pair1.0, pair1.1, pair2.0, pair2.1], r_acc), grid);
    match nu.finite() {
        Some(v) if v < g + tol => (true, nu),
        _ => (false, ExtendedDistance::ZERO),
    }
}

/// Multiple-test distance between `x1` and `x2` from a child-level
/// estimator `de`.
///
/// For the four child pairs `(r1, r2)` the candidate is
/// `de(r1, r2) − h(x1, r1) − h(x2, r2)`; the result is the candidate for the
/// second children if all four agree to within `eps/2`, and `+∞` otherwise.
/// In Δ-mode (`grid` set) each `de` value is rounded to the grid before the
/// comparison, and so is the result.
pub fn distorted_metric_with(
    x1: NodeId,
    x2: NodeId,
    forest: &ForestState,
    de: &dyn Fn(NodeId, NodeId) -> ExtendedDistance,
    eps: f64,
    grid: Option<&DeltaGrid>,
) -> ExtendedDistance {
    let kids1 = children_or_self(forest, x1);
    let kids2 = children_or_self(forest, x2);
    let up = |x: NodeId, r: NodeId| if x == r { 0.0 } else { forest.h(r) };
    let mut vals = [0.0; 4];
    for (i, &r1) in kids1.iter().enumerate() {
        for (j, &r2) in kids2.iter().enumerate() {
            match round_to_delta(de(r1, r2), grid).finite() {
                Some(v) => vals[2 * i + j] = v - up(x1, r1) - up(x2, r2),
                None => return ExtendedDistance::INF,
            }
        }
    }
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if max - min < eps / 2.0 {
        round_to_delta(ExtendedDistance::new(vals[3]), grid)
    } else {
        ExtendedDistance::INF
    }
}

/// [`distorted_metric_with`] using [`distance_estimate`] on the children.
pub fn distorted_metric(
    x1: NodeId,
    x2: NodeId,
    forest: &ForestState,
    metric: &dyn NodeMetric,
    r_acc: f64,
    eps: f64,
    grid: Option<&DeltaGrid>,
) -> ExtendedDistance {
    let de = |a: NodeId, b: NodeId| distance_estimate(a, b, forest, metric, r_acc);
    distorted_metric_with(x1, x2, forest, &de, eps, grid)
}

/// Nearest multiple of Δ with halves rounded up; identity without a grid and
/// on `+∞`.
pub fn round_to_delta(v: ExtendedDistance, grid: Option<&DeltaGrid>) -> ExtendedDistance {
    match (grid, v.finite()) {
        (Some(g), Some(x)) => ExtendedDistance::new(g.round(x)),
        _ => v,
    }
}

/// Symmetric table of working distances over a set of forest node ids.
///
/// Storage is dense over the covered ids only, so tables stay small however
/// large ids grow.  Missing entries are distinct from `+∞`; the diagonal is
/// 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    index: Vec<u32>,
    len: usize,
    vals: Vec<f64>,
}

const UNCOVERED: u32 = u32::MAX;

impl DistanceTable {
    /// Empty table for ids `0..size`.
    pub fn new(size: usize) -> Self {
        let nodes: Vec<NodeId> = (0..size).collect();
        Self::over(&nodes)
    }

    /// Empty table covering exactly `nodes`.
    pub fn over(nodes: &[NodeId]) -> Self {
        let bound = nodes.iter().max().map_or(0, |&m| m + 1);
        let mut index = vec![UNCOVERED; bound];
        for (i, &x) in nodes.iter().enumerate() {
            index[x] = i as u32;
        }
        DistanceTable { index, len: nodes.len(), vals: vec![f64::NAN; nodes.len() * nodes.len()] }
    }

    /// Number of covered ids.
    pub fn size(&self) -> usize {
        self.len
    }

    fn slot(&self, x: NodeId) -> Option<usize> {
        self.index.get(x).filter(|&&i| i != UNCOVERED).map(|&i| i as usize)
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Option<ExtendedDistance> {
        if a == b {
            return Some(ExtendedDistance::ZERO);
        }
        let v = self.vals[self.slot(a)? * self.len + self.slot(b)?];
        (!v.is_nan()).then_some(ExtendedDistance(v))
    }

    pub fn set(&mut self, a: NodeId, b: NodeId, d: ExtendedDistance) {
        let (i, j) = match (self.slot(a), self.slot(b)) {
            (Some(i), Some(j)) => (i, j),
            _ => panic!("node id outside the table"),
        };
        self.vals[i * self.len + j] = d.0;
        self.vals[j * self.len + i] = d.0;
    }

    /// Text matrix over `nodes`: a header of ids, then one row per node with
    /// `inf` for `+∞` and `-` for missing entries.
    pub fn to_text(&self, nodes: &[NodeId]) -> String {
        let mut out = String::from("node");
        for n in nodes {
            out.push_str(&format!("\t{n}"));
        }
        out.push('\n');
        for &a in nodes {
            out.push_str(&a.to_string());
            for &b in nodes {
                match self.get(a, b) {
                    Some(d) => out.push_str(&format!("\t{d}")),
                    None => out.push_str("\t-"),
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::HashMap;

    struct Exact(HashMap<(NodeId, NodeId), f64>);

    impl NodeMetric for Exact {
        fn node_dist(&self, a: NodeId, b: NodeId) -> ExtendedDistance {
            ExtendedDistance::new(self.0[&(a.min(b), a.max(b))])
        }
    }

    fn exact(pairs: &[(NodeId, NodeId, f64)]) -> Exact {
        Exact(pairs.iter().map(|&(a, b, d)| ((a.min(b), a.max(b)), d)).collect())
    }

    #[test]
    fn dist_hat_examples() {
        let a = BitSeq::from_signs(&[1, 1, -1, 1]);
        assert_eq!(dist_hat(&a, &a).unwrap(), ExtendedDistance::ZERO);
        let neg = BitSeq::from_signs(&[-1, -1, 1, -1]);
        assert!(dist_hat(&a, &neg).unwrap().is_inf());
        let b = BitSeq::from_signs(&[1, 1, -1, -1]);
        assert_relative_eq!(dist_hat(&a, &b).unwrap().value(), -0.5 * 0.5f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(dist_hat(&a, &b).unwrap().value(), 0.346_573_6, epsilon = 1e-7);
        // zero correlation maps to +∞
        let c = BitSeq::from_signs(&[1, -1, 1, -1]);
        let d = BitSeq::from_signs(&[1, 1, 1, 1]);
        assert!(dist_hat(&c, &d).unwrap().is_inf());
        assert!(dist_hat(&a, &BitSeq::plus_ones(3)).is_err());
    }

    #[test]
    fn int_hat_examples() {
        let a = BitSeq::from_signs(&[1, -1, 1, 1, -1]);
        assert_eq!(int_hat(&a, &a, &a, &a).unwrap(), ExtendedDistance::ZERO);
        let neg = BitSeq::from_signs(&[-1, 1, -1, -1, 1]);
        assert!(int_hat(&a, &a, &neg, &a).unwrap().is_inf());
        // exact quartet: pendants 0.1, internal 0.05
        let d = |x: f64| ExtendedDistance::new(x);
        assert_relative_eq!(four_point(d(0.25), d(0.25), d(0.2), d(0.2)).value(), 0.05, epsilon = 1e-15);
    }

    /// Two cherries (0,1) under node 4 and (2,3) under node 5, true lengths:
    /// pendants 0.1, internal path between 4 and 5 of length `m`.
    fn two_cherries(m: f64) -> (ForestState, Exact) {
        let mut f = ForestState::with_leaves(4);
        f.add_cherry(0, 1, 0.1, 0.1).unwrap();
        f.add_cherry(2, 3, 0.1, 0.1).unwrap();
        let x = 0.2 + m;
        let e = exact(&[(0, 1, 0.2), (2, 3, 0.2), (0, 2, x), (0, 3, x), (1, 2, x), (1, 3, x)]);
        (f, e)
    }

    #[test]
    fn distance_estimate_on_exact_metric() {
        let (f, e) = two_cherries(0.3);
        assert_relative_eq!(distance_estimate(4, 5, &f, &e, 10.0).value(), 0.3, epsilon = 1e-12);
        assert!(distance_estimate(4, 5, &f, &e, 0.4).is_inf());
        // leaves stand in for their own children
        assert_relative_eq!(distance_estimate(0, 2, &f, &e, 10.0).value(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn is_short_examples() {
        let g = 0.12;
        let (_, e) = two_cherries(g / 2.0);
        let (ok, nu) = is_short((0, 1), (2, 3), &e, 10.0, g, 0.001, None);
        assert!(ok);
        assert_relative_eq!(nu.value(), g / 2.0, epsilon = 1e-12);
        let (_, e) = two_cherries(2.0 * g);
        assert_eq!(is_short((0, 1), (2, 3), &e, 10.0, g, 0.001, None), (false, ExtendedDistance::ZERO));
        assert_eq!(is_short((0, 1), (2, 3), &e, 0.3, g, 0.001, None), (false, ExtendedDistance::ZERO));
    }

    #[test]
    fn distorted_metric_examples() {
        let (f, e) = two_cherries(0.3);
        let eps = 0.0025;
        assert_relative_eq!(distorted_metric(4, 5, &f, &e, 10.0, eps, None).value(), 0.3, epsilon = 1e-12);
        // one child pair off by ε breaks the multiple test
        let bumped = |a: NodeId, b: NodeId| {
            let base = distance_estimate(a, b, &f, &e, 10.0);
            if (a, b) == (0, 2) {
                ExtendedDistance::new(base.value() + eps)
            } else {
                base
            }
        };
        assert!(distorted_metric_with(4, 5, &f, &bumped, eps, None).is_inf());
        let infinite = |_: NodeId, _: NodeId| ExtendedDistance::INF;
        assert!(distorted_metric_with(4, 5, &f, &infinite, eps, None).is_inf());
    }

    #[test]
    fn rounding_examples() {
        let g = DeltaGrid::new(0.1).unwrap();
        let r = |x: f64| round_to_delta(ExtendedDistance::new(x), Some(&g)).value();
        assert_eq!(r(0.299), 0.3);
        assert_eq!(r(0.3), 0.3);
        assert_eq!(r(0.25), 0.3);
        assert!(round_to_delta(ExtendedDistance::INF, Some(&g)).is_inf());
        assert_eq!(round_to_delta(ExtendedDistance::new(0.123), None).value(), 0.123);
    }

    #[test]
    fn table_text_dump() {
        let mut t = DistanceTable::new(3);
        t.set(0, 1, ExtendedDistance::new(0.5));
        t.set(0, 2, ExtendedDistance::INF);
        assert_eq!(t.get(1, 0), Some(ExtendedDistance::new(0.5)));
        assert_eq!(t.get(1, 2), None);
        assert_eq!(t.to_text(&[0, 1, 2]), "node\t0\t1\t2\n0\t0\t0.5\tinf\n1\t0.5\t0\t-\n2\tinf\t-\t0\n");
    }
}
