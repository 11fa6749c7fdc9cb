use serde::Serialize;

use super::solve::Diagnostics;

/// Default allowance above `mu_lambda` for empirical ratios.
pub const DEFAULT_SLACK: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Fewer than three iterations were recorded.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    /// `r_k = ||D_{k+1}||^2 / ||D_k||^2` in the equivalent norm.
    pub ratios: Vec<f64>,
    pub tail_max: f64,
    pub mu_lambda: f64,
    pub slack: f64,
    pub verdict: Verdict,
}

/// Compares empirical ratios, excluding the first, with `mu_lambda + slack`.
pub fn contraction_report(diagnostics: &Diagnostics, slack: f64) -> ContractionReport {
    let ratios = diagnostics.ratios();
    let mu = diagnostics.mu_lambda();
    let tail_max = ratios.iter().skip(1).copied().fold(0.0, f64::max);
    let verdict = if diagnostics.iterations() < 3 {
        Verdict::Inconclusive
    } else if tail_max <= mu + slack {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    ContractionReport {
        ratios,
        tail_max,
        mu_lambda: mu,
        slack,
        verdict,
    }
}
