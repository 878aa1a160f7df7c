//! Wide and deep graph neural networks (WD-GNN).
//!
//! A WD-GNN mixes a linear graph filter (the *wide* part) with a nonlinear
//! graph convolutional network (the *deep* part):
//!
//! ```text
//! Ψ(X; S) = α_W · Σ_k S^k X A_k  +  α_D · Φ(X; S, B)  +  β
//! ```
//!
//! followed by a per-node affine readout. Training happens in two phases:
//! an offline phase fits every parameter jointly with ADAM ([`train`]), and
//! an online phase retrains only the wide taps at test time, either
//! centrally or with a fully distributed consensus-gradient update
//! ([`online`]). Because the deep part is frozen online, the online problem
//! is convex whenever the task loss is.
//!
//! The crate is organised as:
//!
//! * [`graph`]: shift operators, perturbations, permutations, the Jacobi
//!   eigensolver, consensus weights and connectivity checks.
//! * [`nn`]: forward and backward passes for filters, GNNs and the WD-GNN.
//! * [`train`]: losses, ADAM and the offline training loop.
//! * [`online`]: centralized and distributed online updates.
//! * [`analysis`]: stability and tracking bounds.
//! * [`scenarios`]: source localization, flocking, movie recommendation and
//!   a synthetic quadratic tracking task.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod graph;
pub mod nn;
pub mod online;
pub mod rng;
pub mod scenarios;
pub mod train;

pub use error::{Error, Result};
pub use graph::{ConsensusWeights, GraphSignal, Gso, Permutation, RelativeError};
pub use nn::{FilterTaps, GnnParams, Nonlinearity, WdGnnGrad, WdGnnParams};
pub use online::{NodeParams, OnlineTrace};
pub use train::{Dataset, Sample, Target, TrainConfig};
