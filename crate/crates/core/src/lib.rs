//! Discrete fractional p-Laplacian potential theory on uniform grids:
//! Dirichlet and obstacle solvers, capacities, boundary regularity tests and
//! Perron envelopes.

pub mod capacity;
pub mod cli;
pub mod config;
pub mod energy;
pub mod error;
pub mod expr;
pub mod model;
pub mod perron;
pub mod quadrature;
pub mod regularity;
pub mod shape;
pub mod solver;

pub use error::{Error, Result};
