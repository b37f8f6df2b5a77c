//! Observable estimation from local informationally-overcomplete measurements
//! with canonical, optimal and k-locally-optimal dual frames.
//!
//! Conventions: qubit 0 is the leftmost tensor factor (most significant bit of
//! a basis index); operators are vectorized row-major; group outcomes are
//! flattened row-major in group order.

pub mod algebra;
pub mod config;
pub mod correlations;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod frames;
pub mod io;
pub mod povm;
pub mod sampling;
pub mod states;
pub mod tomography;

pub use error::{Error, Result};
