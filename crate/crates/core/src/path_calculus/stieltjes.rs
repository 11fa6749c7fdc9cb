use serde::{Deserialize, Serialize};

use super::function::{BvFunction, GridFunction, Interpolation};
use super::grid::same_grid;
use crate::error::{Error, Result};

/// Where the integrand is evaluated inside each grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EvalPoint {
    /// `x(t_i)` on `[t_i, t_{i+1}]`; non-anticipative.
    #[default]
    Left,
    /// Average of the two endpoint values; exact for piecewise-linear pairs.
    Midpoint,
}

/// `sum_i <x(tau_i), eta(t_{i+1}) - eta(t_i)>` over the nodes of `[a, b]`,
/// left-endpoint evaluation.
pub fn stieltjes_integral(x: &GridFunction, eta: &BvFunction, a: f64, b: f64) -> Result<f64> {
    stieltjes_integral_with(x, eta, a, b, EvalPoint::Left)
}

/// As [`stieltjes_integral`] with an explicit evaluation rule.
///
/// Step-mode integrators carry their mass as jumps at the right node of each
/// cell, so `x` is always evaluated there and `rule` is ignored.
pub fn stieltjes_integral_with(
    x: &GridFunction,
    eta: &BvFunction,
    a: f64,
    b: f64,
    rule: EvalPoint,
) -> Result<f64> {
    check_pair(x, eta)?;
    let grid = x.grid();
    let i = grid.index_of(a)?;
    let j = grid.index_of(b)?;
    if i > j {
        return Err(Error::Domain(format!("need a <= b, got a = {a}, b = {b}")));
    }
    let dim = x.dim();
    let xs = x.values();
    let es = eta.function().values();
    let mut acc = 0.0;
    for k in i..j {
        acc += cell(xs, es, dim, k, eta.mode(), rule);
    }
    Ok(acc)
}

/// Running integral `t_k -> int_0^{t_k} <x, d eta>` at every node.
pub fn stieltjes_cumulative(x: &GridFunction, eta: &BvFunction, rule: EvalPoint) -> Result<Vec<f64>> {
    check_pair(x, eta)?;
    let dim = x.dim();
    let xs = x.values();
    let es = eta.function().values();
    let n = x.grid().len();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 0..n - 1 {
        acc += cell(xs, es, dim, k, eta.mode(), rule);
        out.push(acc);
    }
    Ok(out)
}

/// Scalar running integral on raw node arrays; used on ensemble rows.
pub fn cumulative_scalar(x: &[f64], eta: &[f64], mode: Interpolation, rule: EvalPoint, out: &mut [f64]) {
    out[0] = 0.0;
    let mut acc = 0.0;
    for k in 0..x.len() - 1 {
        acc += cell(x, eta, 1, k, mode, rule);
        out[k + 1] = acc;
    }
}

#[inline]
fn cell(xs: &[f64], es: &[f64], dim: usize, k: usize, mode: Interpolation, rule: EvalPoint) -> f64 {
    let x0 = &xs[k * dim..(k + 1) * dim];
    let x1 = &xs[(k + 1) * dim..(k + 2) * dim];
    let e0 = &es[k * dim..(k + 1) * dim];
    let e1 = &es[(k + 1) * dim..(k + 2) * dim];
    let mut s = 0.0;
    for c in 0..dim {
        let xv = match (mode, rule) {
            (Interpolation::Step, _) => x1[c],
            (Interpolation::Linear, EvalPoint::Left) => x0[c],
            (Interpolation::Linear, EvalPoint::Midpoint) => 0.5 * (x0[c] + x1[c]),
        };
        s += xv * (e1[c] - e0[c]);
    }
    s
}

fn check_pair(x: &GridFunction, eta: &BvFunction) -> Result<()> {
    if !same_grid(x.grid(), eta.grid()) {
        return Err(Error::GridAlignment(
            "integrand and integrator live on different grids".into(),
        ));
    }
    if x.dim() != eta.dim() {
        return Err(Error::GridAlignment(format!(
            "integrand dim {} differs from integrator dim {}",
            x.dim(),
            eta.dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_calculus::grid::TimeGrid;
    use std::sync::Arc;

    fn grid(n: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(1.0, n).unwrap())
    }

    #[test]
    fn constant_integrand_gives_increment() {
        let g = grid(10);
        let one = GridFunction::constant(g.clone(), 1.0);
        let eta = BvFunction::linear(GridFunction::from_fn(g, |t| t * t));
        let v = stieltjes_integral(&one, &eta, 0.0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    /// Oracle: exact value of the left sum for x = t, eta = t^2 on a uniform
    /// grid is sum t_i (2 t_i h + h^2) = 2/3 - 1/(2n) - 1/(6n^2) + ... computed
    /// by direct closed-form summation of the power sums.
    fn left_sum_oracle(n: usize) -> f64 {
        let h = 1.0 / n as f64;
        let nf = n as f64;
        let s1 = (nf - 1.0) * nf / 2.0;
        let s2 = (nf - 1.0) * nf * (2.0 * nf - 1.0) / 6.0;
        2.0 * h * h * h * s2 + h * h * h * s1
    }

    #[test]
    fn t_against_t_squared_converges() {
        let mut last = f64::INFINITY;
        for n in [10usize, 100, 1000, 10_000] {
            let g = grid(n);
            let x = GridFunction::from_fn(g.clone(), |t| t);
            let eta = BvFunction::linear(GridFunction::from_fn(g, |t| t * t));
            let v = stieltjes_integral(&x, &eta, 0.0, 1.0).unwrap();
            assert!((v - left_sum_oracle(n)).abs() < 1e-12);
            let err = (v - 2.0 / 3.0).abs();
            assert!(err < last);
            last = err;
            let m = stieltjes_integral_with(&x, &eta, 0.0, 1.0, EvalPoint::Midpoint).unwrap();
            assert!((m - 2.0 / 3.0).abs() <= 1.0 / (n * n) as f64);
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn unit_jump_picks_value_at_jump() {
        let g = grid(10);
        let x = GridFunction::from_fn(g.clone(), |t| t);
        let eta = BvFunction::step(GridFunction::from_fn(g, |t| if t >= 0.5 - 1e-12 { 1.0 } else { 0.0 }));
        for rule in [EvalPoint::Left, EvalPoint::Midpoint] {
            let v = stieltjes_integral_with(&x, &eta, 0.0, 1.0, rule).unwrap();
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert_eq!(stieltjes_integral(&x, &eta, 0.0, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn cumulative_matches_pointwise() {
        let g = grid(20);
        let x = GridFunction::from_fn(g.clone(), |t| (3.0 * t).cos());
        let eta = BvFunction::linear(GridFunction::from_fn(g.clone(), |t| t.sqrt()));
        let cum = stieltjes_cumulative(&x, &eta, EvalPoint::Left).unwrap();
        for (k, &t) in g.points().iter().enumerate() {
            let v = stieltjes_integral(&x, &eta, 0.0, t).unwrap();
            assert!((cum[k] - v).abs() < 1e-14);
        }
    }

    #[test]
    fn mismatched_grids_rejected() {
        let x = GridFunction::constant(grid(10), 1.0);
        let eta = BvFunction::linear(GridFunction::constant(grid(11), 1.0));
        assert!(matches!(
            stieltjes_integral(&x, &eta, 0.0, 1.0),
            Err(Error::GridAlignment(_))
        ));
    }
}
