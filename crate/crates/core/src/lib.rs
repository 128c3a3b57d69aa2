//! Pure-state multipartite entanglement toolkit.
//!
//! The crate decides genuine multipartite entanglement of pure states,
//! distills bipartite pure entanglement from them by local measurements,
//! converts bipartite entanglement exactly via majorization, and drives the
//! whole pipeline to build an exact LOCC protocol that turns enough copies of a
//! genuinely entangled state into any target state on the same parties.
//!
//! Everything here is `no_std` + `alloc`; file formats and the command line
//! live in the companion `locc-cli` crate.
//!
//! Conventions used throughout:
//!
//! - amplitudes are indexed row-major over the party dimensions with party 0 as
//!   the most significant factor;
//! - Schmidt "coefficients" are the *squared* Schmidt coefficients, i.e. the
//!   eigenvalues of the reduced state, sorted descending;
//! - a protocol site is owned by the party named by its label, and several
//!   sites may share one owner.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bipartite;
pub mod driver;
pub mod error;
pub mod extract;
pub mod ledger;
pub mod linalg;
pub(crate) mod math;
pub mod product;
pub mod protocol;
pub mod state;
pub mod teleport;

pub use error::{Error, Result};
pub use linalg::{Matrix, C64};
pub use state::{Bipartition, PartySystem, PureState, SchmidtData};

/// Squared-Schmidt-coefficient threshold separating entangled from product.
pub const EPS_RANK: f64 = 1e-10;
/// Allowed deviation of a state norm (and of probability sums) from one.
pub const EPS_NORM: f64 = 1e-9;
/// Reconstruction tolerance of a Schmidt decomposition.
pub const EPS_RECON: f64 = 1e-10;
/// Kraus completeness tolerance.
pub const EPS_KRAUS: f64 = 1e-9;
/// Measurement outcomes below this conditional probability are dropped.
pub const EPS_PRUNE: f64 = 1e-12;
/// Tolerance on `|<a|b>|` for global-phase equivalence.
pub const EPS_PHASE: f64 = 1e-9;
