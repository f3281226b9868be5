//! Learning the Green's function of a hyperbolic PDE on `[0,1]²` from
//! input-output pairs.
//!
//! The pipeline is: sample random forcings from a Gaussian process
//! ([`gp`]), sketch each subdomain of `[0,1]⁴` with a randomized SVD
//! ([`rsvd`]), decide whether the block is numerically low rank
//! ([`rank`]), refine the high-rank boxes ([`partition`]) and assemble a
//! hierarchical low-rank model ([`model`]). [`oracles`] provides the
//! black-box solvers used for training and evaluation.
//!
//! The `examples/` directory has one runnable program per capability; the
//! `hypergreen` binary exposes the same drivers from [`experiments`] as
//! subcommands.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod gp;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracles;
pub mod partition;
pub mod rank;
pub mod rsvd;
pub mod seeds;
