use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sequences::PathSequence;
use super::stability::{default_nu_grid, tail_curve};
use super::stats::ks_two_sample;
use crate::error::{Error, Result};
use crate::path_calculus::{variation_slice, TimeGrid};
use crate::registry::{ComponentSpec, Registry};
use crate::stochastic_engine::{block_sum, simulate_brownian};

/// Largest tail fraction accepted as evidence of bounded variation in probability.
pub const TAIL_LIMIT: f64 = 0.01;

fn default_ladder() -> Vec<f64> {
    vec![0.05, 0.1, 0.25, 0.5, 1.0]
}

fn default_tolerance() -> f64 {
    0.02
}

/// JSON description of a stochastic Helly–Bray experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HellyBrayConfig {
    pub horizon: f64,
    /// Integrands `X_n`.
    pub x: ComponentSpec,
    /// Integrators `H_n`.
    pub h: ComponentSpec,
    pub ns: Vec<f64>,
    #[serde(default = "default_ladder")]
    pub nu_ladder: Vec<f64>,
    #[serde(default = "default_nu_grid")]
    pub bv_grid: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Brownian dimension feeding the sequences.
    #[serde(default = "one")]
    pub d: usize,
}

fn one() -> usize {
    1
}

impl HellyBrayConfig {
    pub fn check_fields(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            out.push(("horizon".into(), format!("must be positive, got {}", self.horizon)));
        }
        if self.ns.is_empty() {
            out.push(("ns".into(), "needs at least one index".into()));
        }
        for (i, n) in self.ns.iter().enumerate() {
            if !(*n > 0.0) || !n.is_finite() {
                out.push((format!("ns[{i}]"), format!("must be positive, got {n}")));
            }
        }
        if self.nu_ladder.is_empty() || self.nu_ladder.iter().any(|v| !(*v > 0.0)) {
            out.push(("nu_ladder".into(), "needs positive entries".into()));
        }
        if self.bv_grid.is_empty() {
            out.push(("bv_grid".into(), "needs at least one value".into()));
        }
        if !(self.tolerance > 0.0) {
            out.push(("tolerance".into(), format!("must be positive, got {}", self.tolerance)));
        }
        if self.d == 0 {
            out.push(("d".into(), "must be at least 1".into()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HellyBrayRow {
    pub n: f64,
    pub nu: f64,
    /// `|E phi_nu(I_n) - E phi_nu(I)|`.
    pub phi_distance: f64,
    /// Kolmogorov–Smirnov distance between `I_n(T)` and `I(T)`.
    pub ks: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HellyBrayVerdict {
    Pass,
    Fail,
    /// The variation tail never dropped below [`TAIL_LIMIT`].
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HellyBrayReport {
    pub rows: Vec<HellyBrayRow>,
    /// Per `n`: `E sup_t |I_n(t) - I(t)|` on coupled samples.
    pub coupled_sup: Vec<(f64, f64)>,
    pub tail_curve: Vec<(f64, f64)>,
    pub precondition: bool,
    pub tolerance: f64,
    pub verdict: HellyBrayVerdict,
}

impl HellyBrayReport {
    /// Largest `phi` distance and KS distance at the largest `n`.
    pub fn final_distances(&self) -> (f64, f64) {
        let last = self.rows.iter().map(|r| r.n).fold(f64::NEG_INFINITY, f64::max);
        self.rows
            .iter()
            .filter(|r| r.n == last)
            .fold((0.0, 0.0), |(p, k), r| (p.max(r.phi_distance), k.max(r.ks)))
    }
}

/// `sup_t |x(T) - x(t)| ∧ nu`.
pub fn phi(x: &[f64], nu: f64) -> f64 {
    let last = *x.last().expect("path has nodes");
    x.iter().map(|v| (last - v).abs()).fold(0.0, f64::max).min(nu)
}

/// Per-path samples of one sequence member: the integral process and `||H||_BV`.
struct Samples {
    integral: Vec<Vec<f64>>,
    bv: Vec<f64>,
}

fn sample(
    x: &dyn PathSequence,
    h: &dyn PathSequence,
    n: Option<f64>,
    grid: &TimeGrid,
    w: &crate::stochastic_engine::PathField,
) -> Samples {
    let d = w.dim();
    let nodes = grid.len();
    let (integral, bv): (Vec<Vec<f64>>, Vec<f64>) = (0..w.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut xs = vec![0.0; nodes];
            let mut hs = vec![0.0; nodes];
            x.fill(n, grid, w.path(p), d, &mut xs);
            h.fill(n, grid, w.path(p), d, &mut hs);
            let mut out = vec![0.0; nodes];
            crate::path_calculus::cumulative_scalar(
                &xs,
                &hs,
                crate::path_calculus::Interpolation::Linear,
                crate::path_calculus::EvalPoint::Left,
                &mut out,
            );
            let bv = hs[0].abs() + variation_slice(&hs, 1, 0, nodes - 1);
            (out, bv)
        })
        .unzip();
    Samples { integral, bv }
}

/// Pathwise integrals `int X_n dH_n` against the limit on a shared Brownian
/// ensemble, compared through `phi_nu` and the law at `T`.
#[allow(clippy::too_many_arguments)]
pub fn helly_bray_stochastic_check(
    x: &dyn PathSequence,
    h: &dyn PathSequence,
    ns: &[f64],
    grid: Arc<TimeGrid>,
    n_paths: usize,
    d: usize,
    seed: u64,
    nu_ladder: &[f64],
    bv_grid: &[f64],
    tolerance: f64,
) -> Result<HellyBrayReport> {
    if ns.is_empty() {
        return Err(Error::Domain("no sequence indices given".into()));
    }
    let ens = simulate_brownian(grid.clone(), n_paths, d, seed)?;
    let w = ens.w()?;
    let limit = sample(x, h, None, &grid, w);
    let mean = |f: &(dyn Fn(usize) -> f64 + Sync)| block_sum(n_paths, 1, |p, acc| acc[0] += f(p))[0] / n_paths as f64;
    let last = grid.len() - 1;
    let limit_t: Vec<f64> = limit.integral.iter().map(|v| v[last]).collect();
    let limit_phi: Vec<f64> = nu_ladder
        .iter()
        .map(|&nu| mean(&|p| phi(&limit.integral[p], nu)))
        .collect();

    let mut rows = Vec::new();
    let mut coupled = Vec::new();
    let mut bvs = Vec::new();
    for &n in ns {
        let s = sample(x, h, Some(n), &grid, w);
        let at_t: Vec<f64> = s.integral.iter().map(|v| v[last]).collect();
        let ks = ks_two_sample(&at_t, &limit_t);
        for (k, &nu) in nu_ladder.iter().enumerate() {
            let e = mean(&|p| phi(&s.integral[p], nu));
            rows.push(HellyBrayRow {
                n,
                nu,
                phi_distance: (e - limit_phi[k]).abs(),
                ks,
            });
        }
        let sup = mean(&|p| {
            s.integral[p]
                .iter()
                .zip(&limit.integral[p])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });
        coupled.push((n, sup));
        bvs.push(s.bv);
    }
    let curve = tail_curve(&bvs, bv_grid);
    let precondition = curve.iter().any(|&(_, f)| f < TAIL_LIMIT);
    let mut report = HellyBrayReport {
        rows,
        coupled_sup: coupled,
        tail_curve: curve,
        precondition,
        tolerance,
        verdict: HellyBrayVerdict::Fail,
    };
    let (p, k) = report.final_distances();
    report.verdict = if !precondition {
        HellyBrayVerdict::Inconclusive
    } else if p <= tolerance && k <= tolerance {
        HellyBrayVerdict::Pass
    } else {
        HellyBrayVerdict::Fail
    };
    Ok(report)
}

/// Runs a configured experiment with sequences resolved from `registry`.
pub fn run_helly_bray(
    config: &HellyBrayConfig,
    registry: &Registry,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<HellyBrayReport> {
    if let Some((path, message)) = config.check_fields().into_iter().next() {
        return Err(Error::Config { path, message });
    }
    let x = registry.build_sequence(&config.x)?;
    let h = registry.build_sequence(&config.h)?;
    let grid = TimeGrid::uniform(config.horizon, n_steps)?.into_shared();
    helly_bray_stochastic_check(
        x.as_ref(),
        h.as_ref(),
        &config.ns,
        grid,
        n_paths,
        config.d,
        seed,
        &config.nu_ladder,
        &config.bv_grid,
        config.tolerance,
    )
}
