//! Exact numerics for finite Markov decision processes: policy evaluation,
//! discounted occupancy measures, group inverses, one-norm ergodicity
//! coefficients and policy-improvement bounds.
//!
//! Everything is dense and direct; the intended scale is up to a couple of
//! hundred states.

pub mod bounds;
pub mod error;
pub mod ergodicity;
pub mod evaluation;
pub mod harness;
pub mod improve;
pub mod linalg;
pub mod mdp;
pub mod occupancy;

pub use error::{Error, LinalgError, Result};
pub use linalg::Matrix;
pub use mdp::{induce_chain, InducedChain, Mdp, Policy};
