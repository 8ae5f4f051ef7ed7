//! Local Markovian (Lindblad) dynamics on finite spin lattices.
//!
//! The crate builds local generators, propagates observables and states,
//! analyses generator spectra, and runs the light-cone and clustering
//! experiments. `io` turns model and run files into result tables.

pub mod error;
pub mod experiments;
pub mod io;
pub mod lattice;
pub mod lindblad;
pub mod models;
pub mod operator;
pub mod propagate;
pub mod rng;
pub mod solve;
pub mod sparse;
pub mod spectral;

pub type C64 = num_complex::Complex64;

pub use error::{Error, Result};
pub use lattice::{Lattice, Region, Site};
pub use lindblad::{AssembledGenerator, LocalTerm, Picture};
pub use operator::{LocalOperator, SuperKet};

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);
