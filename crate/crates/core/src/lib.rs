//! Vandermonde null-space precoding for frequency-selective broadcast
//! channels with confidential messages.
//!
//! A block of N symbols followed by a guard interval of L symbols turns an
//! (L+1)-tap frequency-selective channel into an N x (N+L) banded Toeplitz
//! matrix whose L-dimensional right null space can carry confidential
//! streams that the unintended receiver cannot observe. This crate builds
//! those precoders, evaluates the resulting common/confidential rate
//! functionals, optimizes input covariances with KKT certification, extends
//! the construction to multiuser settings, and drives reproducible Monte
//! Carlo SNR sweeps.
//!
//! Modules follow the processing chain:
//!
//! * [`channel`] — impulse responses, Toeplitz matrices, seeded sampling;
//! * [`precoder`] — null-space bases, unitary completion, rank certificates;
//! * [`rates`] — log-det rate functionals and leakage diagnostics;
//! * [`optimizer`] — waterfilling, the three-case weighted-sum-rate
//!   maximization, KKT certificates, rate-region sweeps;
//! * [`multiuser`] — K+1-user and two-user precoders plus s.d.o.f. region
//!   enumeration;
//! * [`baselines`] — reference beamformers for comparison curves;
//! * [`harness`] — experiment configs, the Monte Carlo driver and CSV output.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod multiuser;
pub mod optimizer;
pub mod precoder;
pub mod rates;

pub use error::{Error, Result};
