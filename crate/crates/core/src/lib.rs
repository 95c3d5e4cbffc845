// NaN-robust guards (`!(x > 0.0)`), coefficients tabulated at full
// published precision, and index-based loops over parallel arrays are
// all deliberate in the numeric kernels.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::needless_range_loop
)]

//! European call pricing under the Heston stochastic-volatility model on a
//! truncated domain, with approximate artificial boundary conditions (ABCs)
//! at the far asset boundary.
//!
//! The transformed problem is solved with a Crank-Nicolson finite-difference
//! scheme; the far boundary `S̃ = S̃max` carries one of four conditions
//! ([`BoundaryKind`]): the classical Neumann condition `∂V/∂S̃ = 1`, an
//! approximate artificial boundary condition derived from the heat-kernel
//! representation of the exterior problem, or one of two corrected variants
//! that add a memory integral of interior residual data. A second-order
//! vol-of-vol expansion of the transformed price serves as the reference
//! solution for error studies and Greeks comparisons.

pub mod abc;
pub mod asymptotics;
pub mod bench;
pub mod error;
pub mod fit;
pub mod grid;
pub mod math;
pub mod model;
pub mod scheme;
pub mod solve;

pub use abc::{BoundaryHistory, BoundaryKind};
pub use bench::{ExperimentPreset, PresetId};
pub use error::Error;
pub use fit::GaussLinFit;
pub use grid::{Grid, GridSpec, SolutionField};
pub use model::{ContractSpec, HestonParams};
pub use solve::{march, march_with_history, march_with_tolerance, MarchReport};
