//! Hybrid analog/digital beamforming for uplink multi-cell mmWave massive MIMO
//! based on the primitive Kronecker decomposition of planar-array steering
//! vectors.
//!
//! The analog stage splits every beamforming column into prime-length
//! Kronecker factors. A greedy allocation assigns one factor per
//! interference path to null it exactly, the assigned factors are moved to
//! the front with a factor-swap permutation, and the remaining block is
//! phase matched to the desired user. A small MMSE digital stage then
//! separates the intra-cell users.
//!
//! Module map:
//!
//! - [`kron`]: Kronecker products, ramp decompositions, factor permutations.
//! - [`channel`]: steering vectors, Rician multipath user channels,
//!   interference channels and precoders.
//! - [`numerics`]: Hermitian power iteration and Cholesky solves.
//! - [`beamformers`]: the proposed analog designs plus the baselines.
//! - [`metrics`]: SINR breakdown and sum rate.
//! - [`sim`]: configuration, seeded Monte-Carlo trials, sweeps and output.
//! - [`verify`]: invariant suites shared by the CLI and the tests.
//! - [`cli`]: the `kronbeam` command-line front end.

pub mod beamformers;
pub mod channel;
pub mod cli;
pub mod error;
pub mod kron;
pub mod metrics;
pub mod numerics;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};

/// Complex column vector.
pub type CVector = nalgebra::DVector<num_complex::Complex64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<num_complex::Complex64>;
