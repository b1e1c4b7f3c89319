//! Discrete factor-graph message passing and active-inference planning.
//!
//! The crate is organised bottom-up:
//!
//! * [`dist`] holds finite-domain probability primitives (categoricals,
//!   point masses, column-stochastic matrices) and the constructors used to
//!   assemble model parameters.
//! * [`graph`] is a Forney-style factor graph with sum-product and variational
//!   message rules, a tree scheduler and the EM point-mass update.
//! * [`objectives`] evaluates and optimizes the Bethe free energy (BFE), the
//!   point-mass constrained Bethe free energy (CBFE) and the expected free
//!   energy (EFE), their value decompositions and brute-force oracles.
//! * [`tmaze`] builds the T-maze generative model, the two-armed bandit and the
//!   ground-truth environment.
//! * [`agent`] runs the plan / act / execute / observe / slide loop.
//! * [`cli`] contains the experiment commands behind the `cbfe-aif` binary.
//!
//! All free energies, entropies and divergences are reported in bits.

pub mod agent;
pub mod cli;
pub mod dist;
pub mod error;
pub mod graph;
pub mod model;
pub mod objectives;
pub mod tmaze;

pub use error::{Error, Result};
pub use model::{BanditSpec, ModelSpec, Policy};
