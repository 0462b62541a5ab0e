//! Finite-dimensional models of a current-actuated piezoelectric composite beam.
//!
//! Two discretisations of the same fully dynamic beam (longitudinal and
//! transverse motion coupled to the magnetic vector potential) are built as
//! dense state-space models `ẋ = A x + B u`, `y = C x` with an energy Gram
//! `E`:
//!
//! * [`fem`]: Galerkin finite elements with hat functions;
//! * [`mfem`]: a port-Hamiltonian mixed finite-element scheme.
//!
//! [`analysis`] computes spectra, convergence sweeps, rank tests and closed
//! loops, [`simulation`] integrates trajectories with the implicit midpoint
//! rule, and [`io`], [`plot`], [`config`] and [`cli`] drive the `piezolab`
//! binary.
//!
//! ```
//! use piezolab::{analysis, model::{Scheme, Variant}, params::CompositeParams};
//!
//! let p = CompositeParams::reference();
//! let m = analysis::assemble(&p, Scheme::Fem, 12, Variant::Standard).unwrap();
//! let modes = analysis::spectrum_values(&m).unwrap().first_modes(1);
//! assert!((modes[0] - 1.4350).abs() < 1e-4);
//! ```

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod fem;
pub mod io;
pub mod linalg;
pub mod mfem;
pub mod model;
pub mod params;
pub mod plot;
pub mod simulation;

pub use error::{Error, Result};
pub use model::{Scheme, StateSpaceModel, Variant};
