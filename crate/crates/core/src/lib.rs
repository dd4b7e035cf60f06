//! Reconstruction of binary phylogenies from short sequences by blindfolded
//! cherry picking.
//!
//! Modules follow the pipeline: [`treekit`] (trees, Newick, comparison),
//! [`evolve`] (models and simulation), [`ancestral`] (recursive majority),
//! [`distances`] (bias-cancelling estimators), [`quartets`] (split and
//! collision tests), [`bcp`] (the forest-growing engine), [`params`]
//! (constants and their certificate) and [`harness`] (oracles and
//! experiments).

pub mod seq;
pub mod rng;
pub mod treekit;
pub mod evolve;
pub mod ancestral;
pub mod distances;
pub mod quartets;
pub mod bcp;
pub mod params;
pub mod harness;

pub use seq::BitSeq;
pub use treekit::{NodeId, PhyloTree};
pub use evolve::{CharacterMatrix, ModelSpec};
