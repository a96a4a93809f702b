//! Numerical laboratory for random quantum codes over noisy channels.
//!
//! The crate builds channels and their complementary (environment) channels,
//! extends them to `n` copies, projects onto typical subspaces, samples random
//! code ensembles and measures the quantum error, privacy and
//! distinguishability of the resulting codes. Every analytic inequality used
//! along the way is available as a checkable predicate in [`inequalities`].

pub mod codes;
pub mod error;
pub mod experiment;
pub mod inequalities;
pub mod linalg;
pub mod quantum;
pub mod rng;
pub mod protocol;
pub mod random;
pub mod typicality;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, Spectrum, C64};
pub use quantum::{DensityOperator, Ensemble, KrausChannel, PureState};
