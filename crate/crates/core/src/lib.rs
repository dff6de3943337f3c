//! Long-time homogenization of heterogeneous acoustic wave equations.
//!
//! Higher-order correctors and homogenized tensors on periodic cells,
//! dispersive homogenized propagators, a finite-difference reference solver,
//! two-scale error budgets and eigenstate width diagnostics.

pub mod correctors;
pub mod error;
pub mod fit;
pub mod grid;
pub mod hetwave;
pub mod homprop;
pub mod io;
pub mod media;
pub mod spectral;
pub mod spreading;
pub mod tensor;
pub mod twoscale;

pub use correctors::{build_correctors, CorrectorSet, SolverOptions};
pub use error::{Error, Result};
pub use grid::{build_grid, Grid};
pub use media::{CoefficientField, MediumKind, PeriodicProfile};
pub use tensor::SymTensor;
