//! Dimer models with theta-function weights built from Schottky uniformized M-curves.
//!
//! The crate goes from Schottky data and marked points on the real oval to
//! period matrices, theta functions, amoeba and polygon maps, the Ronkin
//! function and its Legendre dual, quasi-periodic square-lattice weights and a
//! flip Metropolis-Hastings sampler for the resulting dimer model.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod quad;
pub mod ronkin;
pub mod sampler;
pub mod schottky;
pub mod surface;
pub mod theta;
pub mod weights;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
