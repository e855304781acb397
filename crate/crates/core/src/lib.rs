//! Stochastic Lagrangian Navier-Stokes on the periodic torus.

pub mod app;
pub mod config;
pub mod diagnostics;
pub mod diffusive;
pub mod error;
pub mod experiments;
pub mod flowmap;
pub mod grid;
pub mod history;
pub mod interp;
pub mod lemmas;
pub mod linalg;
pub mod reference;
pub mod snapshot;
pub mod spectral;
pub mod stochastic;
pub mod trig;
pub mod weber;

pub use error::{Error, Result};
pub use grid::{Field, ScalarField, TensorField, TorusGrid, VectorField};
pub use history::VelocityHistory;
