//! Non-local compressive-sensing SAR tomography.
//!
//! The crate reconstructs per-pixel elevation profiles from multi-baseline
//! interferometric stacks:
//!
//! * [`model`] holds the acquisition geometry and the discrete forward model
//!   `g = R·γ + ε`.
//! * [`simulate`] generates urban-like synthetic scenes and noisy stacks.
//! * [`nonlocal`] estimates patch-similarity weights from interferometric
//!   statistics and produces the filtered stack plus a weighted-MLE field.
//! * [`solver`] solves complex L1-regularised least squares with a randomized
//!   blockwise proximal gradient method.
//! * [`slimmer`] runs the per-pixel L1 / model-order / least-squares pipeline.
//! * [`crlb`] and [`eval`] provide accuracy bounds and evaluation metrics.

pub mod crlb;
pub mod error;
pub mod eval;
pub(crate) mod linalg;
pub mod model;
pub mod nonlocal;
pub mod random;
pub mod simulate;
pub mod slimmer;
pub mod solver;

pub use error::{Result, TomoError};
pub use num_complex::Complex64;
