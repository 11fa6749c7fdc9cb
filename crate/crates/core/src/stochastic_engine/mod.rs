//! Monte Carlo path generation, increasing processes, and least-squares
//! conditional expectations.

mod ensemble;
mod increasing;
mod io;
mod regression;

pub use ensemble::{simulate_brownian, PathEnsemble, PathField, BROWNIAN, INCREASING};
pub use increasing::{
    check_increasing, omega_delta, oscillation, realize_field, realize_increasing_process,
    IncreasingProcess, IntegralPositiveA, LinearA, OscillatoryA, PowerA, RunningMaxA,
};
pub(crate) use increasing::lagged_sup;
pub use io::{read_ensemble, write_ensemble, EnsembleManifest};
pub(crate) use regression::block_sum;
pub use regression::{conditional_expectation, BasisConfig, Projection};
