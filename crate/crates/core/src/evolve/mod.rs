//! Markov evolution on trees: the two-state symmetric (CFN) and four-state
//! Jukes-Cantor (JC) models, random Δ-discretised trees, and site-pattern
//! simulation.

mod generate;
mod matrix;
mod simulate;

pub use generate::{random_delta_bm_tree, DeltaBmSpec, DeltaGrid};
pub use matrix::{Alphabet, CharacterMatrix, MatrixError, Rows};
pub use simulate::{jc_to_cfn_reduce, simulate, simulate_with_states, NodeStates};

use thiserror::Error;

/// Critical edge length ln 2 / 4 of the CFN model.
pub const G_STAR: f64 = std::f64::consts::LN_2 / 4.0;
/// Edge correlation at the critical length, 2^{-1/2}.
pub const THETA_STAR: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Flip probability at the critical length, (√2 − 1)/√8.
pub const P_STAR: f64 = (std::f64::consts::SQRT_2 - 1.0) / (2.0 * std::f64::consts::SQRT_2);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("negative edge length {0}")]
    NegativeLength(f64),
    #[error("invalid Δ-grid: {0}")]
    InvalidGrid(String),
    #[error("need at least 2 leaves, got {0}")]
    TooFewLeaves(usize),
    #[error("k must be at least 1")]
    EmptySequences,
    #[error("expected a {expected} matrix")]
    WrongAlphabet { expected: &'static str },
}

/// Substitution model family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum ModelKind {
    Cfn,
    Jc,
}

/// A stationary symmetric substitution model with uniform root prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
}

impl ModelSpec {
    pub const CFN: ModelSpec = ModelSpec { kind: ModelKind::Cfn };
    pub const JC: ModelSpec = ModelSpec { kind: ModelKind::Jc };

    pub fn n_states(&self) -> usize {
        match self.kind {
            ModelKind::Cfn => 2,
            ModelKind::Jc => 4,
        }
    }

    /// Uniform stationary distribution.
    pub fn root_prior(&self) -> Vec<f64> {
        let s = self.n_states();
        vec![1.0 / s as f64; s]
    }

    /// Rate matrix Q: off-diagonal 1, diagonal 1 − s for s states.
    pub fn rate_matrix(&self) -> Vec<Vec<f64>> {
        let s = self.n_states();
        (0..s).map(|i| (0..s).map(|j| if i == j { 1.0 - s as f64 } else { 1.0 }).collect()).collect()
    }

    /// exp(d Q) in closed form: diagonal 1 − (s−1)p, off-diagonal p.
    pub fn transition_matrix(&self, d: f64) -> Result<Vec<Vec<f64>>, EvolveError> {
        let p = p_of_d(*self, d)?;
        let s = self.n_states();
        Ok((0..s).map(|i| (0..s).map(|j| if i == j { 1.0 - (s - 1) as f64 * p } else { p }).collect()).collect())
    }
}

/// Edge correlation e^{−2d}.
pub fn theta_of_d(d: f64) -> Result<f64, EvolveError> {
    if d < 0.0 || d.is_nan() {
        return Err(EvolveError::NegativeLength(d));
    }
    Ok((-2.0 * d).exp())
}

/// Probability of moving to one particular other state across an edge of
/// length `d`: (1 − e^{−2d})/2 for CFN, (1 − e^{−4d})/4 for JC.
pub fn p_of_d(model: ModelSpec, d: f64) -> Result<f64, EvolveError> {
    if d < 0.0 || d.is_nan() {
        return Err(EvolveError::NegativeLength(d));
    }
    Ok(match model.kind {
        ModelKind::Cfn => -(-2.0 * d).exp_m1() / 2.0,
        ModelKind::Jc => -(-4.0 * d).exp_m1() / 4.0,
    })
}
