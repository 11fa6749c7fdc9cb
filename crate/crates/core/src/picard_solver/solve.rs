use serde::{Deserialize, Serialize};

use super::gamma::{Gamma, GammaArtifacts, GammaConfig, SolutionPair};
use crate::error::{Error, Result};
use crate::model::{alpha, check_h1, check_h2, equivalent_norm, select_lambda, ConditionReport, FArgs, GArgs, LambdaChoice, Problem};
use crate::path_calculus::{Segment, SegmentKind, MAX_SEGMENT_DIM};
use crate::stochastic_engine::{block_sum, PathEnsemble};

/// Burkholder–Davis–Gundy constants used by the contraction estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BdgConstants {
    /// Constant of the single-equation estimate.
    pub single: f64,
    /// Constant of the perturbed-family estimate; `b = lambda / 2 - family`.
    pub family: f64,
}

impl Default for BdgConstants {
    fn default() -> Self {
        Self {
            single: 72.0,
            family: 144.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    #[serde(flatten)]
    pub gamma: GammaConfig,
    /// Proceed (with a warning) when a smallness condition fails.
    pub override_assumptions: bool,
    pub bdg: BdgConstants,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            gamma: GammaConfig::default(),
            override_assumptions: false,
            bdg: BdgConstants::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Equivalent-norm value of the change produced by this iteration.
    pub norm: f64,
    /// `norm_k / norm_{k-1}`; absent for the first iteration, `0/0 = 0`.
    pub ratio: Option<f64>,
    /// `E sum e^{alpha t + beta A} <dY, dZ dW>` of the change.
    pub stochastic_integral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub records: Vec<IterationRecord>,
    pub lambda: LambdaChoice,
    pub alpha: f64,
    pub beta: f64,
    pub bdg: BdgConstants,
    pub h1_worst: f64,
    pub h2_worst: f64,
    pub assumptions_overridden: bool,
    pub converged: bool,
    /// `E sum_i |Y_i - Y_{i+1} - F dt - G dA + Z dW|^2` of the final iterate.
    pub residual: f64,
}

impl Diagnostics {
    pub fn mu_lambda(&self) -> f64 {
        self.lambda.mu_lambda
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.ratio).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub pair: SolutionPair,
    pub artifacts: GammaArtifacts,
    pub diagnostics: Diagnostics,
}

fn check_condition(report: &ConditionReport, overridden: bool) -> Result<()> {
    if report.all_pass() {
        return Ok(());
    }
    let msg = format!(
        "{} fails on {:.2}% of paths (worst lhs {:.6e} > c = {:.6e})",
        report.name,
        100.0 * report.fail_fraction,
        report.worst_lhs(),
        report.c
    );
    if overridden {
        log::warn!("{msg}; continuing because assumptions are overridden");
        Ok(())
    } else {
        Err(Error::AssumptionFailed(msg))
    }
}

/// Iterates `Gamma` from `(0, 0)` until the equivalent-norm value of the
/// change drops below `tol`; fails with a non-contraction error when
/// `max_iter` is reached while the last ratio is at least 1.
pub fn solve(problem: &Problem, ens: &PathEnsemble, options: &SolveOptions) -> Result<Solution> {
    let sol = iterate(problem, ens, options)?;
    let d = &sol.diagnostics;
    if !d.converged {
        let last_ratio = d.records.last().and_then(|r| r.ratio).unwrap_or(f64::INFINITY);
        if last_ratio >= 1.0 {
            return Err(Error::NonContraction {
                iterations: d.iterations(),
                last_ratio,
                mu_lambda: d.mu_lambda(),
            });
        }
        log::warn!(
            "Picard iteration stopped at max_iter = {} above tol (last ratio {last_ratio:.3e})",
            options.max_iter
        );
    }
    Ok(sol)
}

/// Same iteration as [`solve`], returning the diagnostics whether or not the
/// iteration contracted.
pub fn iterate(problem: &Problem, ens: &PathEnsemble, options: &SolveOptions) -> Result<Solution> {
    if !(options.tol >= 0.0) {
        return Err(Error::Domain(format!("tol must be >= 0, got {}", options.tol)));
    }
    if options.max_iter == 0 {
        return Err(Error::Domain("max_iter must be at least 1".into()));
    }
    let k = problem.constants();
    let h1 = check_h1(problem, ens, k.c)?;
    let h2 = check_h2(problem, ens, k.c)?;
    check_condition(&h1, options.override_assumptions)?;
    check_condition(&h2, options.override_assumptions)?;
    let mut lambda = select_lambda(k.c, k.beta, k.lipschitz_g)?;
    lambda.b = lambda.lambda / 2.0 - options.bdg.family;
    if !(lambda.b > 0.0) {
        return Err(Error::ConstraintViolation(format!(
            "b = lambda / 2 - {} must be positive (lambda = {})",
            options.bdg.family, lambda.lambda
        )));
    }
    let alpha = alpha(k.lipschitz);
    let a_field = ens.a()?;
    let w = ens.w()?;

    let gamma = Gamma::new(problem, ens, options.gamma.clone())?;
    let mut current = SolutionPair::zeros(ens, problem.m(), problem.d());
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut last_art = None;
    for it in 1..=options.max_iter {
        let (next, art) = gamma.apply(&current)?;
        let delta = next.sub(&current)?;
        let norm = equivalent_norm(&delta.y, &delta.z, a_field, alpha, k.beta, lambda.a, lambda.b)?.total();
        let ratio = records.last().map(|r| {
            if r.norm == 0.0 {
                if norm == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                norm / r.norm
            }
        });
        let si = stochastic_integral(&delta, ens, w, a_field, alpha, k.beta);
        log::debug!("iteration {it}: norm {norm:.6e}, ratio {ratio:?}");
        records.push(IterationRecord {
            iteration: it,
            norm,
            ratio,
            stochastic_integral: si,
        });
        current = next;
        last_art = Some(art);
        if norm < options.tol {
            converged = true;
            break;
        }
    }
    let residual = residual(problem, ens, &current)?;
    Ok(Solution {
        pair: current,
        artifacts: last_art.expect("at least one iteration"),
        diagnostics: Diagnostics {
            records,
            lambda,
            alpha,
            beta: k.beta,
            bdg: options.bdg,
            h1_worst: h1.worst_lhs(),
            h2_worst: h2.worst_lhs(),
            assumptions_overridden: options.override_assumptions && !(h1.all_pass() && h2.all_pass()),
            converged,
            residual,
        },
    })
}

fn stochastic_integral(
    delta: &SolutionPair,
    ens: &PathEnsemble,
    w: &crate::stochastic_engine::PathField,
    a: &crate::stochastic_engine::PathField,
    alpha: f64,
    beta: f64,
) -> f64 {
    let grid = ens.grid();
    let (m, d) = (delta.y.dim(), w.dim());
    let sums = block_sum(ens.n_paths(), 1, |p, acc| {
        let (dy, dz, wp, ap) = (delta.y.path(p), delta.z.path(p), w.path(p), a.path(p));
        let mut s = 0.0;
        for i in 0..grid.n_steps() {
            let wgt = (alpha * grid.t(i) + beta * ap[i]).exp();
            let mut inner = 0.0;
            for j in 0..m {
                let mut zdw = 0.0;
                for k in 0..d {
                    zdw += dz[(i * m + j) * d + k] * (wp[(i + 1) * d + k] - wp[i * d + k]);
                }
                inner += dy[i * m + j] * zdw;
            }
            s += wgt * inner;
        }
        acc[0] += s;
    });
    sums[0] / ens.n_paths() as f64
}

/// One-step residual of the discretized equation on the final iterate.
fn residual(problem: &Problem, ens: &PathEnsemble, sol: &SolutionPair) -> Result<f64> {
    let grid = ens.grid();
    let (m, d) = (problem.m(), problem.d());
    let md = m * d;
    let lags = problem.delay_steps();
    let w = ens.w()?;
    let a = ens.a()?;
    let sums = block_sum(ens.n_paths(), 1, |p, acc| {
        let (yp, zp, wp, ap) = (sol.y.path(p), sol.z.path(p), w.path(p), a.path(p));
        let mut f = [0.0; MAX_SEGMENT_DIM];
        let mut g = [0.0; MAX_SEGMENT_DIM];
        let mut total = 0.0;
        for i in 0..grid.n_steps() {
            let t = grid.t(i);
            problem.f.eval(
                &FArgs {
                    t,
                    node: i,
                    path: p,
                    y: &yp[i * m..(i + 1) * m],
                    z: &zp[i * md..(i + 1) * md],
                    y_seg: Segment::new(yp, m, i, lags, SegmentKind::StateLike),
                    z_seg: Segment::new(zp, md, i, lags, SegmentKind::ControlLike),
                    w: &wp[i * d..(i + 1) * d],
                    a: ap[i],
                    rho: &problem.rho,
                    m,
                    d,
                },
                &mut f[..m],
            );
            problem.g.eval(
                &GArgs {
                    t,
                    node: i,
                    path: p,
                    y: &yp[i * m..(i + 1) * m],
                    y_seg: Segment::new(yp, m, i, lags, SegmentKind::StateLike),
                    w: &wp[i * d..(i + 1) * d],
                    a: ap[i],
                    rho_tilde: &problem.rho_tilde,
                    m,
                },
                &mut g[..m],
            );
            let (dt, da) = (grid.dt(i), ap[i + 1] - ap[i]);
            for j in 0..m {
                let mut zdw = 0.0;
                for k in 0..d {
                    zdw += zp[i * md + j * d + k] * (wp[(i + 1) * d + k] - wp[i * d + k]);
                }
                let r = yp[i * m + j] - yp[(i + 1) * m + j] - f[j] * dt - g[j] * da + zdw;
                total += r * r;
            }
        }
        acc[0] += total;
    });
    let r = sums[0] / ens.n_paths() as f64;
    if r.is_finite() {
        Ok(r)
    } else {
        Err(Error::NumericOverflow("one-step residual".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProblemConfig;
    use crate::picard_solver::{contraction_report, Verdict, DEFAULT_SLACK};
    use crate::registry::Registry;
    use serde_json::{json, Value};

    fn problem(n_steps: usize, f: Value, g: Value, xi: Value, constants: Value) -> Problem {
        let cfg: ProblemConfig = serde_json::from_value(json!({
            "horizon": 1.0,
            "delay": 0.1,
            "terminal": xi,
            "driver_f": f,
            "driver_g": g,
            "increasing_process": {"kind": "linear"},
            "constants": constants
        }))
        .unwrap();
        Problem::build(cfg, &Registry::default(), n_steps).unwrap()
    }

    fn standard() -> Value {
        json!({"beta": 2.0, "lipschitz": 0.5, "lipschitz_g": 0.5, "c": 0.001})
    }

    #[test]
    fn constant_gamma_converges_after_one_more_iteration() {
        let p = problem(10, json!({"kind": "zero"}), json!({"kind": "zero"}), json!({"kind": "affine", "params": {"w": 1.0}}), standard());
        let ens = p.simulate(500, 1).unwrap();
        let sol = solve(&p, &ens, &SolveOptions::default()).unwrap();
        assert_eq!(sol.diagnostics.iterations(), 2);
        assert_eq!(sol.diagnostics.records[1].norm, 0.0);
        assert!(sol.diagnostics.converged);

        let opts = SolveOptions { tol: 0.0, max_iter: 4, ..Default::default() };
        let sol = solve(&p, &ens, &opts).unwrap();
        let rep = contraction_report(&sol.diagnostics, DEFAULT_SLACK);
        assert_eq!(rep.ratios, vec![0.0, 0.0, 0.0]);
        assert_eq!(rep.verdict, Verdict::Pass);
    }

    #[test]
    fn stieltjes_linear_g_matches_exponential() {
        let b = 0.5;
        let p = problem(
            200,
            json!({"kind": "zero"}),
            json!({"kind": "linear", "params": {"b": b}}),
            json!({"kind": "constant", "params": {"value": 1.0}}),
            standard(),
        );
        let ens = p.simulate(16, 1).unwrap();
        let sol = solve(&p, &ens, &SolveOptions::default()).unwrap();
        for i in [0, 50, 100, 150, 200] {
            let t = p.grid.t(i);
            let oracle = (b * (1.0 - t)).exp();
            let got = sol.pair.y.mean_at(i, 0);
            assert!((got / oracle - 1.0).abs() < 0.01, "t = {t}: {got} vs {oracle}");
        }
        let rep = contraction_report(&sol.diagnostics, DEFAULT_SLACK);
        assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
    }

    #[test]
    fn failing_h1_is_rejected_unless_overridden() {
        let constants = json!({"beta": 0.5, "lipschitz": 1.118033988749895, "lipschitz_g": 0.1, "c": 0.0017, "k": 2.5});
        let p = problem(
            100,
            json!({"kind": "delayed-linear", "params": {"kappa": 1.5811388300841898}}),
            json!({"kind": "zero"}),
            json!({"kind": "constant", "params": {"value": 1.0}}),
            constants,
        );
        let ens = p.simulate(8, 1).unwrap();
        let err = solve(&p, &ens, &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::AssumptionFailed(_)), "{err}");
        let opts = SolveOptions { override_assumptions: true, ..Default::default() };
        let sol = solve(&p, &ens, &opts).unwrap();
        assert!(sol.diagnostics.assumptions_overridden);
        let rep = contraction_report(&sol.diagnostics, DEFAULT_SLACK);
        eprintln!("{rep:?}");
        assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");

        // a much stronger delay coupling drives the ratios above one
        let p = problem(
            100,
            json!({"kind": "delayed-linear", "params": {"kappa": 5.0}}),
            json!({"kind": "zero"}),
            json!({"kind": "constant", "params": {"value": 1.0}}),
            json!({"beta": 0.5, "lipschitz": 1.118033988749895, "lipschitz_g": 0.1, "c": 0.0017, "k": 2.5}),
        );
        let opts = SolveOptions { override_assumptions: true, max_iter: 6, ..Default::default() };
        let err = solve(&p, &ens, &opts).unwrap_err();
        assert!(matches!(err, Error::NonContraction { iterations: 6, .. }), "{err}");
        let sol = iterate(&p, &ens, &opts).unwrap();
        let rep = contraction_report(&sol.diagnostics, DEFAULT_SLACK);
        assert!(rep.tail_max > 1.0);
        assert_eq!(rep.verdict, Verdict::Fail);
    }

    #[test]
    fn beta_below_bound_is_a_constraint_violation() {
        let cfg: ProblemConfig = serde_json::from_value(json!({
            "horizon": 1.0, "delay": 0.1,
            "terminal": {"kind": "zero"}, "driver_f": {"kind": "zero"}, "driver_g": {"kind": "zero"},
            "increasing_process": {"kind": "linear"},
            "constants": {"beta": 2.0, "lipschitz": 1.0, "lipschitz_g": 1.0, "c": 0.001}
        }))
        .unwrap();
        let err = Problem::build(cfg, &Registry::default(), 10).unwrap_err();
        assert!(matches!(err, Error::ConstraintViolation(_)));
    }
}
