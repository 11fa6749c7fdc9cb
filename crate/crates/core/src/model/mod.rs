//! Problem definitions, weighted norms, and checkers for the standing
//! assumptions and smallness conditions.

pub mod assumptions;
pub mod generators;
mod integrability;
mod norms;
mod probe;
mod problem;

pub use assumptions::{
    alpha, c_threshold, check_h1, check_h2, h1_lhs, h2_lhs, mu_lambda, select_lambda, ConditionReport,
    LambdaChoice,
};
pub use generators::{DriverF, DriverG, FArgs, GArgs, Terminal, TerminalArgs};
pub use integrability::{check_integrability, IntegrabilityReport, MomentRow, HEAVY_TAIL_SHARE};
pub use norms::{equivalent_norm, weighted_norm, NormReport};
pub use probe::{probe_f, probe_g, probe_lipschitz, ProbeReport, PROBE_TOLERANCE};
pub use problem::{BoundedW, Constants, KBound, Problem, ProblemConfig};
