//! Perturbation families, stability sweeps and Helly–Bray checks.

mod family;
mod helly_bray;
mod sampling;
pub mod sequences;
mod stability;
mod stats;

pub use family::{FamilyConfig, Generate, MemberConfig, PerturbationFamily};
pub use helly_bray::{
    helly_bray_stochastic_check, phi, run_helly_bray, HellyBrayConfig, HellyBrayReport, HellyBrayRow,
    HellyBrayVerdict, TAIL_LIMIT,
};
pub use sampling::{delta_sup_f, delta_sup_g, halton, SampleSpec, SupEstimate};
pub use sequences::PathSequence;
pub use stability::{
    coupled_ensemble, default_nu_grid, error_metric, run_stability, tail_curve, StabilityOptions, StabilityReport,
    StabilityRow,
};
pub use stats::{ks_two_sample, spearman};
