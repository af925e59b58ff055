//! Critical values and values of random SU(m+1) polynomials on CP^m.

pub mod bridge;
pub mod cli;
pub mod critfind;
pub mod densities;
pub mod ensemble;
pub mod error;
pub mod fubini;
pub mod numerics;
pub mod pipeline;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
