//! Numerical toolkit for the subset-summed distance-to-biseparable measure
//! `K(ρ) = Σ_{|S| ≥ 2} Δ(ρ_S)` on W-type and related states, with a noisy
//! circuit simulator and Walsh–Fourier analysis of output distributions.

pub mod error;
pub mod kappa;
pub mod ldp;
mod linalg;
pub mod noise;
mod optim;
pub mod qstate;
pub mod separability;
pub mod wstates;

pub use error::{Error, Result};
pub use kappa::{KappaConfig, KappaEstimate};
pub use qstate::{DensityMatrix, PureState, QubitSubset, SubsystemLayout};
pub use separability::{Bipartition, DeltaConfig, SepDistanceBounds};
