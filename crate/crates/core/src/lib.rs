//! Monte Carlo engine and verification batteries for semigroups of a
//! subordinated relativistic particle coupled to a transversal Gaussian
//! field, built on exact subordinator sampling, analytic kernel oracles, a
//! pseudospectral eigensolver, and pathwise Gram evaluation of the field
//! pair interaction.

pub mod bessel;
pub mod error;
pub mod estimate;
pub mod field;
pub mod fk;
pub mod kernel;
pub mod pairing;
pub mod path;
pub mod potential;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod subordinator;

pub use error::{Error, Result};
pub use estimate::Estimate;
pub use path::{Branch, PathConfig, SubordinatedPath};
pub use rng::{derive_stream, RandomStream};
