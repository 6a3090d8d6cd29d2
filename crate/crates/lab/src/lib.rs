//! Limit sequences and seeded experiments: least-squares-like shrinkage as
//! one coefficient block grows, the conditional Lindley paradox and its
//! avoidance, information and selection consistency, model-averaged
//! prediction and limits of the `σ^2` posterior.

pub mod result;
pub mod scenarios;
pub mod sequence;
pub mod experiments;
pub mod simulation;

pub use result::{ExperimentResult, Row, Verdict};
