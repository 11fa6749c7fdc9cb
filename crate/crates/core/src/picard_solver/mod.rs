//! Picard iteration of the frozen-delay map with contraction diagnostics.

mod gamma;
mod report;
mod solve;

pub use gamma::{build_b, gamma_step, terminal_values, Gamma, GammaArtifacts, GammaConfig, Scheme, SolutionPair};
pub use report::{contraction_report, ContractionReport, Verdict, DEFAULT_SLACK};
pub use solve::{iterate, solve, BdgConstants, Diagnostics, IterationRecord, Solution, SolveOptions};
