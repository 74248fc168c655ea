//! Desk-scale numerical laboratory for free and spatially-cutoff-interacting
//! thermal scalar fields in 1+1 dimensions.
//!
//! Everything is built over a finite symmetric momentum grid, so thermal
//! covariances, Green's functions and L² pairings are exact finite sums and
//! every statistical claim has a deterministic oracle next to it:
//!
//! * [`spectral`] — finite-mode one-particle spaces (neutral and charged),
//!   dispersion, Bose occupation, the time-zero embedding;
//! * [`quasifree`] — the quasi-free KMS functional, closed-form real-time
//!   and Euclidean Green's functions, KMS / time-reversal / positivity
//!   diagnostics;
//! * [`pathspace`] — the β-periodic Gaussian path space: Matsubara spectral
//!   sampling, a Cholesky oracle, reflection/translation, OS-positivity and
//!   Markov checks;
//! * [`wick`] — Wick ordering, reordering between covariances, Wick
//!   exponentials and exact Gaussian pairings;
//! * [`interactions`] — spatially cutoff interactions (polynomial,
//!   exponential, charged), kernels, exact L² inner products and
//!   UV-convergence diagnostics;
//! * [`fkn`] — Feynman-Kac-Nelson kernels, the reweighted measure, perturbed
//!   correlation functions, L^p bounds, and perturbed OS/Markov checks;
//! * [`standard_form`] — finite-dimensional GNS/Liouvillean verification and
//!   the operator-vs-path-integral cross-check.

pub mod error;
pub mod fkn;
pub mod interactions;
pub mod pathspace;
pub mod quasifree;
pub mod rng;
pub mod spectral;
pub mod standard_form;
pub mod wick;

pub use error::{Error, Result};
