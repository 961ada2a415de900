//! Per-class autoencoders for planar point classes, and autoencoders of
//! those autoencoders trained against an execution-driven loss.
//!
//! The pipeline: sample points from a parametric class (lines through
//! the origin, circles, arcs), train a tiny autoencoder per class member
//! ([`autoenc`]), collect the resulting parameter vectors into a corpus
//! ([`corpus`]), then train a second autoencoder whose inputs are those
//! parameter vectors and whose loss is measured by *running* the
//! reconstructed networks on probe points ([`mae`]). [`report`] evaluates
//! and exports results; [`nngraph`] is the shared network engine.

pub mod autoenc;
pub mod classes;
pub mod corpus;
pub mod error;
pub mod mae;
pub mod nngraph;
pub mod par;
pub mod report;

pub use error::{Error, Result};
