//! Solver and experiment toolkit for backward stochastic differential
//! equations with time-delayed generators and a Stieltjes term driven by an
//! increasing process.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csv_io;
pub mod error;
pub mod experiment;
pub mod model;
pub mod path_calculus;
pub mod picard_solver;
pub mod registry;
pub mod stability_lab;
pub mod stochastic_engine;

pub use error::{Error, Result};
