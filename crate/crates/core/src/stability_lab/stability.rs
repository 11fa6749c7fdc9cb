use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::family::PerturbationFamily;
use super::sampling::{delta_sup_f, delta_sup_g, SampleSpec};
use super::stats::spearman;
use crate::error::Result;
use crate::model::Problem;
use crate::path_calculus::variation_slice;
use crate::picard_solver::{solve, terminal_values, SolutionPair, SolveOptions};
use crate::stochastic_engine::{block_sum, realize_increasing_process, PathEnsemble, BROWNIAN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityOptions {
    pub solve: SolveOptions,
    pub sample: SampleSpec,
    /// Largest acceptable error metric for the last member.
    pub threshold: f64,
    /// Grid of `nu` values for the variation tail curve.
    pub nu_grid: Vec<f64>,
    /// Random arguments per member when probing declared constants.
    pub probe_samples: usize,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            sample: SampleSpec::default(),
            threshold: 1e-3,
            nu_grid: default_nu_grid(),
            probe_samples: 256,
        }
    }
}

/// `0, 0.25, 0.5, ..., 10`.
pub fn default_nu_grid() -> Vec<f64> {
    (0..=40).map(|i| 0.25 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub n: f64,
    /// `E |xi_n - xi|^{2p}`.
    pub delta_xi: f64,
    pub delta_f: f64,
    pub delta_g: f64,
    /// `E sup_t |A_n(t) - A(t)|`.
    pub sup_a_diff: f64,
    /// `E ||A_n - A||_BV`.
    pub bv_h: f64,
    /// `E sup_t |Y_n - Y|^2 + E int |Z_n - Z|^2 dt`.
    pub error: f64,
    /// `E e^{q beta A_n(T)}`.
    pub exp_moment: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub p: f64,
    pub q: f64,
    pub sample: SampleSpec,
    /// `(nu, max_n P(||A_n - A||_BV > nu))`.
    pub tail_curve: Vec<(f64, f64)>,
    pub base_norm: f64,
    pub spearman: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
}

/// Ensemble sharing `base`'s Brownian paths with `problem`'s own `A`.
pub fn coupled_ensemble(problem: &Problem, base: &PathEnsemble) -> Result<PathEnsemble> {
    let mut ens = PathEnsemble::new(base.grid().clone(), base.n_paths(), base.seed());
    ens.insert(BROWNIAN, base.w()?.clone())?;
    realize_increasing_process(problem.a_spec.as_ref(), &mut ens)?;
    Ok(ens)
}

/// `E sup |dY|^2 + E sum |dZ|^2 dt` with left sums.
pub fn error_metric(a: &SolutionPair, b: &SolutionPair) -> Result<f64> {
    let d = a.sub(b)?;
    let grid = d.y.grid().clone();
    let (my, mz) = (d.y.dim(), d.z.dim());
    let sums = block_sum(d.y.n_paths(), 1, |p, acc| {
        let (yp, zp) = (d.y.path(p), d.z.path(p));
        let mut sup: f64 = 0.0;
        let mut int = 0.0;
        for i in 0..grid.len() {
            let y2: f64 = yp[i * my..(i + 1) * my].iter().map(|v| v * v).sum();
            sup = sup.max(y2);
            if i + 1 < grid.len() {
                let z2: f64 = zp[i * mz..(i + 1) * mz].iter().map(|v| v * v).sum();
                int += z2 * grid.dt(i);
            }
        }
        acc[0] += sup + int;
    });
    Ok(sums[0] / d.y.n_paths() as f64)
}

fn mean(n: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    block_sum(n, 1, |p, acc| acc[0] += f(p))[0] / n as f64
}

/// Solves the base problem and every member on one Brownian ensemble and
/// tabulates the convergence quantities per member.
pub fn run_stability(
    family: &PerturbationFamily,
    n_paths: usize,
    seed: u64,
    options: &StabilityOptions,
) -> Result<StabilityReport> {
    let base = family.base.as_ref();
    let base_ens = base.simulate(n_paths, seed)?;
    let ensembles = family
        .members
        .iter()
        .map(|(_, p)| coupled_ensemble(p, &base_ens))
        .collect::<Result<Vec<_>>>()?;
    family.validate_members(&ensembles, options.probe_samples)?;

    let base_sol = solve(base, &base_ens, &options.solve)?;
    let base_norm = error_metric(&base_sol.pair, &SolutionPair::zeros(&base_ens, base.m(), base.d()))?;
    let xi = terminal_values(base, &base_ens)?;
    let a = base_ens.a()?;
    let k = base.constants();
    let (m, d) = (base.m(), base.d());
    let grid = base.grid.clone();
    let nodes = grid.len();

    let solved = family
        .members
        .par_iter()
        .zip(&ensembles)
        .map(|((_, p), ens)| solve(p, ens, &options.solve))
        .collect::<Vec<_>>();

    let mut rows = Vec::new();
    let mut bvs: Vec<Vec<f64>> = Vec::new();
    for (((n, problem), ens), sol) in family.members.iter().zip(&ensembles).zip(solved) {
        let sol = sol?;
        let xi_n = terminal_values(problem, ens)?;
        let an = ens.a()?;
        let delta_xi = mean(n_paths, |p| {
            let s: f64 = (0..m).map(|j| (xi_n[p * m + j] - xi[p * m + j]).powi(2)).sum();
            s.powf(family.p)
        });
        let sup_a_diff = mean(n_paths, |p| {
            an.path(p)
                .iter()
                .zip(a.path(p))
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        });
        let bv: Vec<f64> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let h: Vec<f64> = an.path(p).iter().zip(a.path(p)).map(|(x, y)| x - y).collect();
                h[0].abs() + variation_slice(&h, 1, 0, nodes - 1)
            })
            .collect();
        let bv_h = mean(n_paths, |p| bv[p]);
        let exp_moment = mean(n_paths, |p| (family.q * k.beta * an.path(p)[nodes - 1]).exp());
        let delta_f = delta_sup_f(problem.f.as_ref(), base.f.as_ref(), &grid, m, d, &base.rho, &options.sample).value;
        let delta_g = delta_sup_g(problem.g.as_ref(), base.g.as_ref(), &grid, m, d, &base.rho_tilde, &options.sample).value;
        let error = error_metric(&sol.pair, &base_sol.pair)?;
        log::info!("member n = {n}: error {error:.6e}, bv {bv_h:.4}");
        rows.push(StabilityRow {
            n: *n,
            delta_xi,
            delta_f,
            delta_g,
            sup_a_diff,
            bv_h,
            error,
            exp_moment,
            iterations: sol.diagnostics.iterations(),
        });
        bvs.push(bv);
    }

    let tail_curve = tail_curve(&bvs, &options.nu_grid);
    let ns: Vec<f64> = rows.iter().map(|r| r.n).collect();
    let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let rho = spearman(&ns, &errs);
    let last_ok = errs.last().is_some_and(|&e| e <= options.threshold);
    let all_small = errs.iter().all(|&e| e <= options.threshold);
    let pass = last_ok && (all_small || rho.is_some_and(|r| r < 0.0));
    Ok(StabilityReport {
        rows,
        p: family.p,
        q: family.q,
        sample: options.sample,
        tail_curve,
        base_norm,
        spearman: rho,
        threshold: options.threshold,
        pass,
    })
}

/// `nu -> max_n` fraction of samples with value `> nu`.
pub fn tail_curve(values: &[Vec<f64>], nu_grid: &[f64]) -> Vec<(f64, f64)> {
    let mut grid = nu_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.iter()
        .map(|&nu| {
            let worst = values
                .iter()
                .map(|v| v.iter().filter(|&&x| x > nu).count() as f64 / v.len().max(1) as f64)
                .fold(0.0, f64::max);
            (nu, worst)
        })
        .collect()
}
