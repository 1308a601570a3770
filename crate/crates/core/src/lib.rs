//! Bayes and predictively oriented (PrO) posteriors for Gaussian regression
//! models, approximated by variational gradient descent on particle
//! ensembles, with an MMD-based misspecification diagnostic and a 2-D
//! travel-time tomography model.

pub mod error;
pub mod kernels;
pub mod model;
pub mod seed;
pub mod tomo;

pub use error::{Error, Result};
pub mod vgd;
pub mod misspec;
