//! Bayes factors, shrinkage and model averaging for Gaussian linear
//! regression under Zellner's g prior, the hyper-g prior and the block
//! hyper-g prior.

pub mod error;
pub mod quad;
pub mod special;
pub mod design;
pub mod gprior;
pub mod block;
pub mod models;

pub use error::{Error, Result};
