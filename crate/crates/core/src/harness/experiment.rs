//! Seeded reconstruction trials and the searches built on them.

use crate::bcp::{bcp_run, MetricMode, RunOptions};
use crate::evolve::{random_delta_bm_tree, simulate, DeltaBmSpec, ModelSpec};
use crate::params::{derive_params, ParamOverrides, ParamsError};
use crate::rng::{derive_seed, pair_key};
use crate::treekit::rf_distance;
use rayon::prelude::*;
use std::time::{Duration, Instant};

const TREE_TAG: u64 = 0x7472_6565;
const SIM_TAG: u64 = 0x7369_6d73;
const TIE_TAG: u64 = 0x7469_6573;

/// Branch-length regime and failure budget.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Regime {
    pub f: f64,
    pub g: f64,
    pub delta: f64,
    pub failure: f64,
}

impl Default for Regime {
    fn default() -> Self {
        Regime { f: 0.02, g: 0.12, delta: 0.02, failure: 0.1 }
    }
}

/// One reconstruction of one random tree.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrialRecord {
    pub n: usize,
    pub k: usize,
    /// Seed of this trial; tree, characters and tie bits derive from it.
    pub seed: u64,
    pub success: bool,
    /// Robinson-Foulds distance to the true tree, if a tree was produced.
    pub rf: Option<usize>,
    pub iterations: usize,
    pub error: Option<String>,
    /// Wall time; kept out of serialised output so files are reproducible.
    #[serde(skip)]
    pub wall: Duration,
}

/// Success count at one `(n, k)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Aggregate {
    pub n: usize,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
}

impl Aggregate {
    pub fn rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    pub fn of(records: &[TrialRecord]) -> Aggregate {
        let first = &records[0];
        Aggregate {
            n: first.n,
            k: first.k,
            trials: records.len(),
            successes: records.iter().filter(|r| r.success).count(),
        }
    }
}

/// Seed of trial `index` at size `n` under `base`.
pub fn trial_seed(base: u64, n: usize, index: usize) -> u64 {
    derive_seed(base, pair_key(n as u64, index as u64))
}

/// Generates a tree from `seed`, simulates `k` CFN sites and reconstructs.
pub fn run_trial(regime: &Regime, n: usize, k: usize, seed: u64) -> Result<TrialRecord, ParamsError> {
    let start = Instant::now();
    let params = derive_params(regime.f, regime.g, regime.delta, n, regime.failure, ParamOverrides {
        k: Some(k),
        ..Default::default()
    })?;
    let spec = DeltaBmSpec { n, f: regime.f, g: regime.g, delta: regime.delta };
    let tree = random_delta_bm_tree(&spec, derive_seed(seed, TREE_TAG)).map_err(|e| ParamsError::InvalidRegime(e.to_string()))?;
    let chars = simulate(&tree, ModelSpec::CFN, k, derive_seed(seed, SIM_TAG)).expect("valid tree and k");
    let run = bcp_run(&chars, &params, MetricMode::Statistical { seed: derive_seed(seed, TIE_TAG) }, &RunOptions::default());
    let (rf, iterations, error) = match run {
        Ok(out) => (Some(rf_distance(&out.tree, &tree).expect("same leaves")), out.iterations, None),
        Err(e) => (None, 0, Some(e.to_string())),
    };
    Ok(TrialRecord { n, k, seed, success: rf == Some(0), rf, iterations, error, wall: start.elapsed() })
}

/// `trials` independent trials at `(n, k)`, run in parallel.
pub fn run_trials(regime: &Regime, n: usize, k: usize, trials: usize, base: u64) -> Result<Vec<TrialRecord>, ParamsError> {
    (0..trials).into_par_iter().map(|i| run_trial(regime, n, k, trial_seed(base, n, i))).collect()
}

/// Search settings for [`minimal_k`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct KSearch {
    pub trials: usize,
    /// Required success rate.
    pub target: f64,
    pub k_start: usize,
    pub k_max: usize,
    /// Stop bisecting once `hi / lo` is at most this.
    pub ratio: f64,
}

/// Outcome of a minimal-`k` search at one `n`.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MinimalK {
    pub n: usize,
    /// Smallest evaluated `k` that met the target, if any did.
    pub k_star: Option<usize>,
    /// Every evaluated `k`, in evaluation order.
    pub evaluations: Vec<Aggregate>,
    pub records: Vec<TrialRecord>,
}

/// Doubles `k` from `k_start` until the target success rate is met, then
/// bisects.  Every `k` uses the same trial seeds.
pub fn minimal_k(regime: &Regime, n: usize, search: &KSearch, base: u64) -> Result<MinimalK, ParamsError> {
    let mut out = MinimalK { n, k_star: None, evaluations: Vec::new(), records: Vec::new() };
    let eval = |k: usize, out: &mut MinimalK| -> Result<bool, ParamsError> {
        let recs = run_trials(regime, n, k, search.trials, base)?;
        let agg = Aggregate::of(&recs);
        out.evaluations.push(agg);
        out.records.extend(recs);
        Ok(agg.rate() >= search.target)
    };
    let mut lo = 0usize;
    let mut hi = search.k_start;
    while !eval(hi, &mut out)? {
        lo = hi;
        hi *= 2;
        if hi > search.k_max {
            return Ok(out);
        }
    }
    while lo > 0 && (hi as f64) / (lo as f64) > search.ratio {
        let mid = (lo + hi) / 2;
        if eval(mid, &mut out)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    out.k_star = Some(hi);
    Ok(out)
}

/// Least-squares fit `k = a + b ln n`; returns `(a, b)`.
pub fn fit_log(points: &[(usize, usize)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, k)| k as f64).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    Some((my - b * mx, b))
}
