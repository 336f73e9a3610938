//! Teacher-student recovery for two-layer ReLU networks.
//!
//! A student `x ↦ Σ a_j σ(⟨w_j, x⟩)` is trained with norm-dependent gradient
//! descent against a planted orthogonal teacher. The crate also exposes the
//! measure-space view of the student (signed atoms on the sphere), the
//! BLASSO objective, dual certificates for the teacher's support, and the
//! diagnostics used to check recovery along a run.

pub mod certificate;
pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod rng;

pub use error::{Error, Result};
