//! Numerical laboratory for correlation matrices in the elliptope.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod facts;
pub mod gan;
pub mod geometry;
pub mod linalg;
pub mod mc;
pub mod portfolio;
pub mod provenance;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
pub use rng::Seed;
