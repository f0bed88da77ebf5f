//! Moment-SOS relaxation toolkit for boundary control of a 1D semilinear
//! heat equation.
//!
//! The pipeline mirrors the stages of the method: declare a control problem
//! (`problem`), assemble the truncated weak-formulation constraints
//! (`weakform`) together with moment/localizing cone blocks (`sdpcone`),
//! solve the resulting semidefinite program (`sdpsolver`), extract an
//! integral feedback controller from the pseudo-moments (`extraction`) and
//! validate it in closed loop against an LQR baseline (`pdesim`, `lqr`).
//!
//! The `momheat` binary exposes every stage as a subcommand; stages
//! communicate through plain text files so each one can be inspected or
//! replaced independently.

pub mod cli;
pub mod error;
pub mod extraction;
pub mod lqr;
pub mod pdesim;
pub mod polybasis;
pub mod problem;
pub mod quad;
pub mod sdpcone;
pub mod sdpsolver;
pub mod weakform;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
