//! Critical-regime moment machinery for directed polymers on diamond
//! hierarchical lattices.
//!
//! * [`maps`]: the variance map, its inverse and iterates, the Abel-type
//!   function `G_b` and the variance limit `R_b(r)` by two routes.
//! * [`disorder`]: bond-disorder laws, tilted-weight moments and the
//!   inverse-temperature schedule.
//! * [`moments`]: exact moment-recursion polynomials and the limit moments
//!   `R_b^(m)(r)`.
//! * [`simulator`]: exact sampling, enumeration and pool Monte Carlo for the
//!   normalized partition function.
//! * [`cli`]: batch front end.

pub mod cli;
pub mod disorder;
pub mod error;
pub mod maps;
pub mod moments;
pub mod real;
pub mod simulator;

pub use error::{Error, Result};
