//! Self-similar corotational wave maps into the three-sphere: profile
//! construction, approximate solutions and radial evolution.

pub mod approx;
pub mod basis;
pub mod error;
pub mod evolve;
pub mod matching;
pub mod quadrature;
pub mod segment_solver;

pub use error::{Error, Result};
