//! Constrained first-order ascent through pseudoinverse-weighted gradients.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: symmetric eigendecomposition, pseudoinverse, image projection.
//! * [`operator`]: PSD constraint operators, the effort functional and
//!   admissibility tests.
//! * [`direction`]: the unit-effort optimal ascent direction `∝ H†g`.
//! * [`kernel`]: rank-k truncated pseudoinverse kernels with residual reports.
//! * [`cones`]: circular cone families, coupling thresholds and the
//!   spherical compatibility measure.
//! * [`ascent`]: iterated budget-aware ascent with trajectory logging.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ascent;
pub mod cones;
pub mod direction;
pub mod error;
pub mod kernel;
pub mod operator;
pub mod spectral;
pub mod vector;

pub use error::{Error, Result};
pub use operator::ConstraintOperator;
pub use spectral::{decompose, decompose_auto, SpectralDecomposition, SymmetricMatrix};
