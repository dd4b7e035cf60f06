//! Oracles, worked instances and experiment drivers.

mod analytic;
mod experiment;
mod oracle;
mod worked;

pub use analytic::AnalyticChannel;
pub use experiment::{
    fit_log, minimal_k, run_trial, run_trials, trial_seed, Aggregate, KSearch, MinimalK, Regime, TrialRecord,
};
pub use oracle::{brute_force_maj_correlation, oracle_enumerate_small, LeafDistribution, OracleError, MAX_STATES};
pub use worked::{narrative, worked_example, Narrative, WorkedExample};
