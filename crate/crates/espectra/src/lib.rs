//! Spectra of products of independent random matrices with correlated
//! (elliptic) entries.
//!
//! The crate builds square random matrices whose mirrored off-diagonal
//! entries are correlated atom pairs, forms products of `m` independent
//! factors together with low-rank deterministic perturbations, and studies
//! their spectra through a cyclic block linearization: the `m` factors are
//! placed on the superdiagonal blocks of an `mN x mN` matrix whose `m`-th
//! power is block diagonal with the product's eigenvalues on every block.
//!
//! On the analytic side, the Hermitization of the linearization has a
//! `2m x 2m` matrix-valued Stieltjes transform that satisfies a quadratic
//! self-consistent equation. [`dyson`] solves that equation both in closed
//! form and by damped fixed-point iteration, and recovers the limiting
//! symmetrized singular-value densities from the scalar transform. The
//! limiting eigenvalue laws (uniform disk, uniform ellipse, and the m-th
//! power of the uniform disk) live there as well.
//!
//! [`metrics`] turns these pieces into statistical experiments: distance of
//! empirical spectra from the limit laws, concentration of the matrix
//! Stieltjes transform, least-singular-value tail checks, and log-potential
//! slopes, all reported as serializable pass/fail records.

pub mod atoms;
pub mod dyson;
pub mod ensembles;
pub mod error;
pub mod export;
pub mod metrics;
pub mod numeric;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
