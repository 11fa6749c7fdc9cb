use rayon::prelude::*;
use serde::Serialize;

use super::problem::Problem;
use crate::error::{Error, Result};
use crate::stochastic_engine::{lagged_sup, PathEnsemble};

/// Lower end of the admissible `lambda` range.
pub const LAMBDA_POLE: f64 = 288.0;
const SCAN_POINTS: usize = 200;

/// `c_{beta, L~} = min{(beta^2 - 8 L~^2) / (4 beta^2), 1/584}`.
pub fn c_threshold(beta: f64, l_tilde: f64) -> Result<f64> {
    if !(beta > 2.0 * 2f64.sqrt() * l_tilde) {
        return Err(Error::ConstraintViolation(format!(
            "beta <= 2*sqrt(2)*L~ ({beta} <= {})",
            2.0 * 2f64.sqrt() * l_tilde
        )));
    }
    Ok(c_threshold_unchecked(beta, l_tilde))
}

pub(crate) fn c_threshold_unchecked(beta: f64, l_tilde: f64) -> f64 {
    ((beta * beta - 8.0 * l_tilde * l_tilde) / (4.0 * beta * beta)).min(1.0 / 584.0)
}

/// `alpha = 8 L^2 + 1/2`.
pub fn alpha(lipschitz: f64) -> f64 {
    8.0 * lipschitz * lipschitz + 0.5
}

/// `mu_lambda = max{c(2+l), 8 L~^2 (2+l) / (l beta^2), 2c(2+l)/(l - 288)}`.
pub fn mu_lambda(lambda: f64, c: f64, beta: f64, l_tilde: f64) -> f64 {
    let (a, b, d) = mu_branches(lambda, c, beta, l_tilde);
    a.max(b).max(d)
}

fn mu_branches(lambda: f64, c: f64, beta: f64, l_tilde: f64) -> (f64, f64, f64) {
    (
        c * (2.0 + lambda),
        8.0 * l_tilde * l_tilde * (2.0 + lambda) / (lambda * beta * beta),
        2.0 * c * (2.0 + lambda) / (lambda - LAMBDA_POLE),
    )
}

/// Parameters of the equivalent norm used to measure Picard contraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub mu_lambda: f64,
    /// `lambda beta / 2`.
    pub a: f64,
    /// `lambda / 2 - 144`.
    pub b: f64,
}

/// Minimizes `mu_lambda` over a logarithmic scan of
/// `(288 (1 + 1e-6), 10 max(288, 1/(2c) - 2))`, then bisects for the point
/// where the increasing branch meets the larger decreasing one.
pub fn select_lambda(c: f64, beta: f64, l_tilde: f64) -> Result<LambdaChoice> {
    let thr = c_threshold(beta, l_tilde)?;
    if !(c > 0.0) || c >= thr {
        return Err(Error::ConstraintViolation(format!(
            "c = {c} must lie in (0, c_threshold = {thr:.6e})"
        )));
    }
    let lo = LAMBDA_POLE * (1.0 + 1e-6);
    let hi = 10.0 * LAMBDA_POLE.max(1.0 / (2.0 * c) - 2.0);
    let ratio = (hi / lo).ln();
    let scan: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| lo * (ratio * i as f64 / (SCAN_POINTS - 1) as f64).exp())
        .collect();
    let mu = |l: f64| mu_lambda(l, c, beta, l_tilde);
    let (mut best, mut best_mu) = (scan[0], mu(scan[0]));
    let mut best_i = 0;
    for (i, &l) in scan.iter().enumerate() {
        let v = mu(l);
        if v < best_mu {
            best = l;
            best_mu = v;
            best_i = i;
        }
    }
    // the increasing branch minus the decreasing envelope changes sign once
    let gap = |l: f64| {
        let (inc, d1, d2) = mu_branches(l, c, beta, l_tilde);
        inc - d1.max(d2)
    };
    let mut a = scan[best_i.saturating_sub(1)];
    let mut b = scan[(best_i + 1).min(SCAN_POINTS - 1)];
    if gap(a) < 0.0 && gap(b) > 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if gap(mid) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        for l in [a, b] {
            let v = mu(l);
            if v < best_mu {
                best = l;
                best_mu = v;
            }
        }
    }
    if !(best_mu < 1.0) || !(best > LAMBDA_POLE) {
        return Err(Error::ConstraintViolation(format!(
            "no lambda > 288 gives mu_lambda < 1 (best {best_mu} at {best})"
        )));
    }
    Ok(LambdaChoice {
        lambda: best,
        mu_lambda: best_mu,
        a: best * beta / 2.0,
        b: best / 2.0 - 144.0,
    })
}

/// `K_1 max{1,T} e^{(8L^2 + 1/2) delta + beta omega} / (4 L^2)`.
pub fn h1_lhs(k1: f64, horizon: f64, lipschitz: f64, delta: f64, beta: f64, omega: f64) -> f64 {
    k1 * horizon.max(1.0) * (alpha(lipschitz) * delta + beta * omega).exp() / (4.0 * lipschitz * lipschitz)
}

/// `4 K~_1 A(T) e^{(8L^2 + 1/2) delta + beta omega} / beta`.
pub fn h2_lhs(k1_tilde: f64, a_final: f64, lipschitz: f64, delta: f64, beta: f64, omega: f64) -> f64 {
    4.0 * k1_tilde * a_final * (alpha(lipschitz) * delta + beta * omega).exp() / beta
}

/// Per-path outcome of a smallness condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub name: &'static str,
    pub c: f64,
    pub lhs: Vec<f64>,
    pub pass: Vec<bool>,
    /// `min_p (c - lhs_p)`; negative when some path fails.
    pub worst_margin: f64,
    pub fail_fraction: f64,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.pass.iter().all(|&p| p)
    }

    pub fn worst_lhs(&self) -> f64 {
        self.lhs.iter().copied().fold(0.0, f64::max)
    }

    fn from_lhs(name: &'static str, c: f64, lhs: Vec<f64>) -> Self {
        let pass: Vec<bool> = lhs.iter().map(|&v| v <= c).collect();
        let worst_margin = lhs.iter().map(|&v| c - v).fold(f64::INFINITY, f64::min);
        let fails = pass.iter().filter(|&&p| !p).count();
        let fail_fraction = fails as f64 / pass.len().max(1) as f64;
        if fails > 0 {
            log::warn!("{name}: {fails} of {} paths fail (worst margin {worst_margin:.3e})", pass.len());
        }
        Self {
            name,
            c,
            lhs,
            pass,
            worst_margin,
            fail_fraction,
        }
    }
}

fn check_c(problem: &Problem, c: f64) -> Result<()> {
    let k = problem.constants();
    let thr = c_threshold(k.beta, k.lipschitz_g)?;
    if !(c > 0.0) || c >= thr {
        return Err(Error::ConstraintViolation(format!(
            "c = {c} must lie in (0, c_threshold = {thr:.6e})"
        )));
    }
    Ok(())
}

/// Evaluates the first smallness condition path by path.
pub fn check_h1(problem: &Problem, ens: &PathEnsemble, c: f64) -> Result<ConditionReport> {
    check_c(problem, c)?;
    let k = problem.constants();
    let grid = ens.grid();
    let w = ens.w()?;
    let a = ens.a()?;
    let lag = problem.delay_steps();
    let d = w.dim();
    let lhs: Vec<f64> = (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let k1 = k.k.path_sup(grid, w.path(p), d);
            let omega = lagged_sup(a.path(p), lag);
            h1_lhs(k1, grid.horizon(), k.lipschitz, problem.config.delay, k.beta, omega)
        })
        .collect();
    Ok(ConditionReport::from_lhs("H1", c, lhs))
}

/// Evaluates the second smallness condition path by path.
pub fn check_h2(problem: &Problem, ens: &PathEnsemble, c: f64) -> Result<ConditionReport> {
    check_c(problem, c)?;
    let k = problem.constants();
    let grid = ens.grid();
    let w = ens.w()?;
    let a = ens.a()?;
    let lag = problem.delay_steps();
    let d = w.dim();
    let lhs: Vec<f64> = (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let k1 = k.k_tilde.path_sup(grid, w.path(p), d);
            let path = a.path(p);
            let omega = lagged_sup(path, lag);
            h2_lhs(k1, *path.last().unwrap(), k.lipschitz, problem.config.delay, k.beta, omega)
        })
        .collect();
    Ok(ConditionReport::from_lhs("H2", c, lhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        assert!((c_threshold(4.0, 1.0).unwrap() - 1.0 / 584.0).abs() < 1e-15);
        let v = c_threshold(2.8285, 1.0).unwrap();
        let oracle = (2.8285f64.powi(2) - 8.0) / (4.0 * 2.8285f64.powi(2));
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 1.28e-5).abs() < 5e-7);
        assert!(matches!(
            c_threshold(2.0 * 2f64.sqrt(), 1.0),
            Err(Error::ConstraintViolation(_))
        ));
    }

    #[test]
    fn mu_at_300() {
        let v = mu_lambda(300.0, 0.001, 4.0, 1.0);
        assert!((v - 8.0 * 302.0 / (300.0 * 16.0)).abs() < 1e-15);
        assert!((v - 0.5033).abs() < 1e-4);
    }

    #[test]
    fn selected_lambda_contracts() {
        for (c, beta, lt) in [(0.001, 4.0, 1.0), (1e-5, 2.8285, 1.0), (0.0017, 10.0, 0.1), (1e-4, 1.0, 0.3)] {
            let ch = select_lambda(c, beta, lt).unwrap();
            assert!(ch.lambda > 288.0);
            assert!(ch.mu_lambda < 1.0, "{c} {beta} {lt}: {ch:?}");
            assert_eq!(ch.a, ch.lambda * beta / 2.0);
            assert_eq!(ch.b, ch.lambda / 2.0 - 144.0);
            assert!(ch.b > 0.0);
            assert_eq!(ch.mu_lambda, mu_lambda(ch.lambda, c, beta, lt));
        }
        assert!(select_lambda(0.002, 4.0, 1.0).is_err());
        assert!(select_lambda(0.0, 4.0, 1.0).is_err());
    }

    #[test]
    fn h_formulas() {
        let l1 = h1_lhs(0.001, 1.0, 1.0, 0.1, 4.0, 0.1);
        assert!((l1 - 0.001 * (0.85f64 + 0.4).exp() / 4.0).abs() < 1e-15);
        assert!((l1 - 0.000872).abs() < 1e-6);
        let l2 = h2_lhs(0.001, 1.0, 1.0, 0.1, 4.0, 0.1);
        assert!((l2 - 0.004 * 1.25f64.exp() / 4.0).abs() < 1e-15);
        assert!((l2 - 0.00349).abs() < 1e-5);
        assert_eq!(h1_lhs(0.0, 3.0, 1.0, 0.5, 2.0, 1.0), 0.0);
        assert_eq!(h2_lhs(1.0, 0.0, 1.0, 0.5, 2.0, 0.0), 0.0);
    }
}
