use super::{EvolveError, G_STAR};
use crate::treekit::{PhyloTree, Validation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Multiples of a step Δ, with a single conversion from integer units to
/// `f64` shared by the tree generator and by rounding, so that a rounded
/// estimate and a generated length with the same unit count are bit-identical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaGrid {
    delta: f64,
    /// 1/Δ when it is an integer; division by an integer is exact-rounded,
    /// which makes `units / inv` the closest double to the true multiple.
    inv: Option<f64>,
}

impl DeltaGrid {
    pub fn new(delta: f64) -> Result<Self, EvolveError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(EvolveError::InvalidGrid(format!("Δ = {delta} must be positive")));
        }
        let inv = 1.0 / delta;
        let r = inv.round();
        let inv = ((inv - r).abs() < 1e-9 * r.max(1.0)).then_some(r);
        Ok(DeltaGrid { delta, inv })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn value(&self, units: i64) -> f64 {
        match self.inv {
            Some(inv) => units as f64 / inv,
            None => units as f64 * self.delta,
        }
    }

    /// Integer units of `x` when `x` is a multiple of Δ (relative 1e−9).
    pub fn units_of(&self, x: f64) -> Option<i64> {
        let u = (x / self.delta).round();
        ((x / self.delta - u).abs() < 1e-9 * u.abs().max(1.0)).then_some(u as i64)
    }

    /// Nearest multiple, halves rounding up.
    pub fn round(&self, x: f64) -> f64 {
        self.value((x / self.delta + 0.5).floor() as i64)
    }
}

/// Parameters of a random Δ-discretised tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaBmSpec {
    pub n: usize,
    pub f: f64,
    pub g: f64,
    pub delta: f64,
}

impl DeltaBmSpec {
    /// Validated integer unit range `[f/Δ, g/Δ]`.
    pub fn unit_range(&self) -> Result<(DeltaGrid, i64, i64), EvolveError> {
        let grid = DeltaGrid::new(self.delta)?;
        if !(self.f > 0.0 && self.f <= self.g && self.g < G_STAR) {
            return Err(EvolveError::InvalidGrid(format!("need 0 < f ≤ g < g* (f = {}, g = {})", self.f, self.g)));
        }
        let lo = grid.units_of(self.f).ok_or(EvolveError::InvalidGrid(format!("f = {} is not a multiple of Δ = {}", self.f, self.delta)))?;
        let hi = grid.units_of(self.g).ok_or(EvolveError::InvalidGrid(format!("g = {} is not a multiple of Δ = {}", self.g, self.delta)))?;
        if lo > hi || lo <= 0 {
            return Err(EvolveError::InvalidGrid("empty length grid".into()));
        }
        Ok((grid, lo, hi))
    }
}

/// Random tree with lengths on the Δ-grid.
///
/// Topology: start from the three-leaf star and attach leaves 4..=n one at a
/// time to a uniformly chosen existing edge, which yields the uniform
/// distribution over labelled unrooted binary topologies.  Lengths: i.i.d.
/// uniform over {f, f+Δ, …, g}.  For n = 2 the tree is returned in rooted
/// form with two grid-valued root edges.
pub fn random_delta_bm_tree(spec: &DeltaBmSpec, seed: u64) -> Result<PhyloTree, EvolveError> {
    let (grid, lo, hi) = spec.unit_range()?;
    let n = spec.n;
    if n < 2 {
        return Err(EvolveError::TooFewLeaves(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| grid.value(rng.random_range(lo..=hi));
    let labels: Vec<(usize, u32)> = (0..n).map(|i| (i, i as u32 + 1)).collect();
    let valid = Validation::default();
    if n == 2 {
        let edges = [(2, 0, draw(&mut rng)), (2, 1, draw(&mut rng))];
        return Ok(PhyloTree::from_edges(3, &edges, &labels, Some(2), valid).expect("valid cherry"));
    }
    // leaves are nodes 0..n, internal nodes n.. in creation order
    let mut edges: Vec<(usize, usize)> = vec![(n, 0), (n, 1), (n, 2)];
    let mut next = n + 1;
    for leaf in 3..n {
        let i = rng.random_range(0..edges.len());
        let (a, b) = edges[i];
        let mid = next;
        next += 1;
        edges[i] = (a, mid);
        edges.push((mid, b));
        edges.push((mid, leaf));
    }
    let weighted: Vec<_> = edges.iter().map(|&(a, b)| (a, b, draw(&mut rng))).collect();
    Ok(PhyloTree::from_edges(next, &weighted, &labels, None, valid).expect("attachment keeps a binary tree"))
}
