//! Simulation toolkit for qubit-conditioned squeezing of a Kittel magnon mode.

pub mod constants;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod observables;
pub mod qops;
pub mod scenarios;
pub mod states;

pub use error::{Error, Result};
