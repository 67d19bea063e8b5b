//! Factorization machines with interaction-aware attention and field
//! importance.
//!
//! * [`data`]: field-aware sparse instances, schemas, dataset conversion,
//!   negative sampling, splitting and batching.
//! * [`model`]: the predictors (FM, IFM and its single-aspect ablations, INN,
//!   DeepIFM), interaction sampling and model files.
//! * [`train`]: hand-derived gradients, optimizers and the training loop.
//! * [`eval`]: metrics, field-importance reports and experiment sweeps.
//! * [`numeric`]: small dense linear algebra, seeded randomness and a
//!   finite-difference gradient checker.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numeric;
pub mod train;

pub use error::{Error, Result};
