//! Simulation toolkit for pairs of correlated Wigner-type random matrices.
//!
//! The crate covers the model itself (sampling and assumption checks),
//! linear filtering, the Matrix Dyson Equation, the interpolating
//! Ornstein-Uhlenbeck flow between the pair and its Gaussian-divisible
//! counterpart, spectral statistics and a config-driven experiment runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod filtering;
pub mod gft_flow;
pub mod linalg;
pub mod mde;
pub mod model;
pub mod rng;
pub mod spectral_stats;
pub mod stats;

pub use error::{Error, Result};
pub use linalg::{HMatrix, C64};
pub use model::{MatrixPairSample, PairModelSpec, SymmetryClass};
