//! Nonparametric partial importance sampling for Monte Carlo pricing of
//! path-dependent options, with the supporting QMC, path construction and
//! benchmark tooling.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod error;
mod sobol_table;

pub mod effdim;
pub mod exec;
pub mod harness;
pub mod integrand;
pub mod lbfp;
pub mod lsis;
pub mod models;
pub mod npis;
pub mod paths;
pub mod rng;

pub use error::{Error, Result};
