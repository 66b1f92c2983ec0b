//! Profile decompositions of concentrating sequences on constant-curvature
//! manifolds: synthesis, extraction, diagnostics and atlas-at-infinity checks.

pub mod atlas;
pub mod bubbles;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod extraction;
pub mod fields;
pub mod geometry;

pub use error::{Error, Result};
