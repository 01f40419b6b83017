//! Simulation and bound-evaluation toolkit for distributed statistical learning.
//!
//! The crate covers one-round distributed SVM (clients train locally, the server
//! averages weight vectors), multi-round federated SGLD, the closed-form
//! generalization bounds for both protocols, and the finite-alphabet
//! rate-distortion machinery those bounds are built on.
//!
//! Module map:
//!
//! - [`datasets`]: IDX ingestion, synthetic two-Gaussian data, standardization, sharding.
//! - [`features`]: random Fourier features and Johnson-Lindenstrauss matrices.
//! - [`learners`]: 0-1 / margin losses, SGD hinge-loss SVM, one SGLD step.
//! - [`distributed`]: DSVM and FSGLD orchestration, risk bookkeeping, sweeps.
//! - [`bounds`]: DSVM, Lipschitz and FSGLD bound evaluators.
//! - [`ratedistortion`]: Blahut-Arimoto and the algorithm rate-distortion functions.
//! - [`compression`]: the JL-based compressed hypothesis and its distortion check.
//! - [`rng`]: seed tree and the deterministic random streams used everywhere.

// `!(x > 0.0)` also rejects NaN, which the suggested rewrite would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod bounds;
pub mod compression;
pub mod datasets;
pub mod distributed;
pub mod error;
pub mod features;
pub mod learners;
pub mod linalg;
pub mod ratedistortion;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
