//! MAP inference for discrete Markov random fields.
//!
//! The crate is organised around a single energy representation,
//! [`MrfInstance`], and a family of solvers that minimise it:
//!
//! - [`lift`]: a graph-neural-network reparameterisation trained by gradient
//!   descent on a differentiable relaxation of the energy, decoded by rounding.
//! - [`message_passing`]: min-sum loopy belief propagation and its
//!   tree-reweighted variant for pairwise models.
//! - [`mrf::brute_force_map`]: exhaustive enumeration, used as an oracle.
//!
//! Instances come from UAI files ([`uai`]), the synthetic generators in
//! [`gen`], or the cell-identity reduction in [`pci`]. The [`bench`] module
//! drives solvers over instances and writes CSV reports; the `mrflift`
//! binary is a thin command-line wrapper around it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod bench;
pub mod gen;
pub mod lift;
pub mod message_passing;
pub mod mrf;
pub mod pci;
pub mod report;
pub mod uai;

pub use lift::{LiftConfig, LiftedModel};
pub use mrf::{Assignment, MrfInstance, PaddedInstance, PairwiseGraph};
pub use report::{SolveReport, Termination};
pub use uai::RawModel;
