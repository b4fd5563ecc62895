//! Exceptional-point encircling with two-photon non-Hermitian quantum walks.

pub mod error;
pub mod harness;
pub mod loops;
pub mod metrics;
pub mod optics;
pub mod smallmat;
pub mod spectrum;
pub mod tomo;
pub mod walkops;

pub use error::{Error, Result};
