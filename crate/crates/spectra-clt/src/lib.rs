//! Spectral statistics of real i.i.d. random matrices.
//!
//! An n×n matrix X with i.i.d. entries n^{-1/2}·χ (Eχ = 0, Eχ² = 1) has its
//! eigenvalues spread over the unit disk, and smooth linear statistics
//! Σ_i f(σ_i) fluctuate on scale O(1) around a computable mean. This crate
//! implements both sides of that picture:
//!
//! * deterministic predictions: the self-consistent density of the Hermitized
//!   family H^z ([`mde`]), its stability operators ([`stability`]), and the
//!   limiting mean/covariance of linear statistics ([`cltpred`]);
//! * simulation: entry-law sampling and matrix flows ([`ensemble`]),
//!   Hermitization spectra and eigenvector overlaps ([`spectral`]),
//!   correlated eigenvalue SDEs ([`dbm`]);
//! * Monte Carlo experiments tying the two together with reproducible
//!   streams and persisted trial records ([`harness`]).
//!
//! Everything stochastic is keyed by [`rng::StreamKey`]; results are bitwise
//! reproducible for a fixed seed regardless of thread count.

pub mod cltpred;
pub mod dbm;
pub mod ensemble;
pub mod harness;
pub mod mde;
pub mod quad;
pub mod rng;
pub mod selftest;
pub mod spectral;
pub mod stability;
pub mod stats;
pub mod testfn;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
