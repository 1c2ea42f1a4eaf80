//! Precision limits for phase estimation with noisy spin ensembles.
//!
//! The crate is organized by stage of the estimation pipeline:
//!
//! * [`spin`]: symmetric probe states, Wigner rotation elements and
//!   density-matrix containers.
//! * [`channels`]: exact finite-`N` decoherence maps (collective and
//!   individual dephasing, relaxation, excitation, two-arm particle loss).
//! * [`fisher`]: quantum Fisher information via the symmetric logarithmic
//!   derivative, classical Fisher information of canonical-phase and `S^x`
//!   measurements, and the two-sided dephasing error bounds.
//! * [`optimize`]: direct QFI maximization over probes, bifurcation scans and
//!   entanglement thresholds.
//! * [`semiclassical`]: effective potentials, the 1-D ground-state solver,
//!   asymptotic bounds and optimal clustering.

pub mod channels;
pub mod error;
pub mod fisher;
mod linalg;
pub mod optimize;
pub mod semiclassical;
pub mod spin;

pub use error::{Error, Result};
pub use spin::{
    make_probe, to_density, var_sz, wigner_small_d, Block, BlockLabel, BlockedDensityMatrix,
    ProbeFamily, ProbeState, SymmetricDensityMatrix, C64,
};
