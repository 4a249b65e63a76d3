//! Spectral numerics for quasi-periodic traveling water waves with constant
//! vorticity: dispersion, linear solutions, transversality, measure estimates,
//! straightening of transport operators and KAM reduction of truncated operators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cutoff;
pub mod dispersion;
pub mod error;
pub mod expm;
pub mod kam_reduce;
pub mod lattice;
pub mod linear_waves;
pub mod measure;
pub mod sites;
pub mod straightening;
pub mod torus;
pub mod transversality;

pub use dispersion::{Depth, DispersionParams};
pub use error::{Error, Result};
pub use sites::TangentialSites;
pub use torus::{Parity, TravelingWaveFn};
