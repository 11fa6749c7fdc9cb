use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::ensemble::{PathEnsemble, PathField, INCREASING};
use crate::error::{Error, Result};
use crate::path_calculus::TimeGrid;

/// Generator of a nondecreasing adapted process with `A(0) = 0`.
///
/// `realize` must only read `w[..=i*d]` when writing `out[i]`.
pub trait IncreasingProcess: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// False when every path gets the same deterministic function.
    fn is_stochastic(&self) -> bool;

    /// Writes `A(t_i)` for every node of one path; `w` is that path's
    /// Brownian values, node-major with `d` components.
    fn realize(&self, grid: &TimeGrid, w: &[f64], d: usize, out: &mut [f64]);
}

/// `A(t) = rate * t`.
#[derive(Debug, Clone)]
pub struct LinearA {
    pub rate: f64,
}

impl IncreasingProcess for LinearA {
    fn name(&self) -> &str {
        "linear"
    }
    fn is_stochastic(&self) -> bool {
        false
    }
    fn realize(&self, grid: &TimeGrid, _w: &[f64], _d: usize, out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(grid.points()) {
            *o = self.rate * t;
        }
    }
}

/// `A(t) = scale * t^exponent`.
#[derive(Debug, Clone)]
pub struct PowerA {
    pub scale: f64,
    pub exponent: f64,
}

impl IncreasingProcess for PowerA {
    fn name(&self) -> &str {
        "power"
    }
    fn is_stochastic(&self) -> bool {
        false
    }
    fn realize(&self, grid: &TimeGrid, _w: &[f64], _d: usize, out: &mut [f64]) {
        for (o, &t) in out.iter_mut().zip(grid.points()) {
            *o = self.scale * t.powf(self.exponent);
        }
    }
}

/// `A(t) = scale * max(0, max_{s <= t} W_c(s))`.
#[derive(Debug, Clone)]
pub struct RunningMaxA {
    pub scale: f64,
    pub component: usize,
}

impl IncreasingProcess for RunningMaxA {
    fn name(&self) -> &str {
        "running-max"
    }
    fn is_stochastic(&self) -> bool {
        true
    }
    fn realize(&self, _grid: &TimeGrid, w: &[f64], d: usize, out: &mut [f64]) {
        let mut m: f64 = 0.0;
        for (i, o) in out.iter_mut().enumerate() {
            m = m.max(w[i * d + self.component]);
            *o = self.scale * m;
        }
    }
}

/// `A(t) = scale * int_0^t |W(s)|^2 ds`, left sums.
#[derive(Debug, Clone)]
pub struct IntegralPositiveA {
    pub scale: f64,
}

impl IncreasingProcess for IntegralPositiveA {
    fn name(&self) -> &str {
        "integral-positive"
    }
    fn is_stochastic(&self) -> bool {
        true
    }
    fn realize(&self, grid: &TimeGrid, w: &[f64], d: usize, out: &mut [f64]) {
        out[0] = 0.0;
        for i in 0..grid.n_steps() {
            let sq: f64 = w[i * d..(i + 1) * d].iter().map(|v| v * v).sum();
            out[i + 1] = out[i] + self.scale * sq * grid.dt(i);
        }
    }
}

/// `A^n(t) = A(t) + T sin(2 pi n t / T) / (4 pi n)`.
///
/// With `A(t) = t` the derivative is `1 + cos(.) / 2 >= 1/2`, the sup distance
/// to the base is `T / (4 pi n)` and the variation of the perturbation stays
/// near `T / pi` for every `n`.
#[derive(Debug, Clone)]
pub struct OscillatoryA {
    pub base: Arc<dyn IncreasingProcess>,
    pub n: f64,
}

impl IncreasingProcess for OscillatoryA {
    fn name(&self) -> &str {
        "oscillatory"
    }
    fn is_stochastic(&self) -> bool {
        self.base.is_stochastic()
    }
    fn realize(&self, grid: &TimeGrid, w: &[f64], d: usize, out: &mut [f64]) {
        self.base.realize(grid, w, d, out);
        let horizon = grid.horizon();
        for (o, &t) in out.iter_mut().zip(grid.points()) {
            *o += oscillation(t, horizon, self.n);
        }
        out[0] = 0.0;
    }
}

/// `T sin(2 pi n t / T) / (4 pi n)`.
pub fn oscillation(t: f64, horizon: f64, n: f64) -> f64 {
    horizon * (2.0 * PI * n * t / horizon).sin() / (4.0 * PI * n)
}

/// Realizes `spec` on every path of `ens`, checking `A(0) = 0` and
/// monotonicity. Returns the field without attaching it.
pub fn realize_field(spec: &dyn IncreasingProcess, ens: &PathEnsemble) -> Result<PathField> {
    let w = ens.w()?;
    let d = w.dim();
    let grid = ens.grid().clone();
    let field = PathField::from_paths(grid.clone(), ens.n_paths(), 1, |p, out| {
        spec.realize(&grid, w.path(p), d, out)
    });
    check_increasing(&field)?;
    Ok(field)
}

/// Realizes `spec` and stores it as the ensemble's `A`.
pub fn realize_increasing_process(spec: &dyn IncreasingProcess, ens: &mut PathEnsemble) -> Result<()> {
    let field = realize_field(spec, ens)?;
    ens.insert(INCREASING, field)?;
    ens.set_a_stochastic(spec.is_stochastic());
    Ok(())
}

/// First violation in path order, if any.
pub fn check_increasing(field: &PathField) -> Result<()> {
    let bad = (0..field.n_paths()).into_par_iter().find_map_first(|p| {
        let a = field.path(p);
        if a[0] != 0.0 || !a[0].is_finite() {
            return Some(Error::Domain(format!(
                "increasing process must start at 0, path {p} starts at {}",
                a[0]
            )));
        }
        a.windows(2)
            .position(|w| !(w[1] >= w[0]) || !w[1].is_finite())
            .map(|i| Error::Monotonicity {
                path: p,
                node: i + 1,
                prev: a[i],
                next: a[i + 1],
            })
    });
    match bad {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// `max_{t_i <= T - delta} A(t_i + delta) - A(t_i)`.
pub fn omega_delta(a: &[f64], grid: &TimeGrid, delta: f64) -> Result<f64> {
    if delta > grid.horizon() + grid.tolerance() {
        return Err(Error::Domain(format!(
            "delay {delta} exceeds the horizon {}",
            grid.horizon()
        )));
    }
    if !(delta >= 0.0) {
        return Err(Error::Domain(format!("delay must be nonnegative, got {delta}")));
    }
    let k = grid.index_of(delta)?;
    Ok(lagged_sup(a, k))
}

pub(crate) fn lagged_sup(a: &[f64], k: usize) -> f64 {
    (0..a.len() - k).map(|i| a[i + k] - a[i]).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic_engine::simulate_brownian;

    fn ens(n: usize, paths: usize) -> PathEnsemble {
        let g = TimeGrid::uniform(1.0, n).unwrap().into_shared();
        simulate_brownian(g, paths, 1, 3).unwrap()
    }

    #[test]
    fn linear_is_ramp() {
        let mut e = ens(10, 4);
        realize_increasing_process(&LinearA { rate: 1.0 }, &mut e).unwrap();
        let a = e.a().unwrap();
        for p in 0..4 {
            assert_eq!(a.path(p), e.grid().points());
        }
        assert!(!e.a_is_stochastic());
    }

    #[test]
    fn running_max_nonnegative() {
        let mut e = ens(50, 100);
        realize_increasing_process(&RunningMaxA { scale: 1.0, component: 0 }, &mut e).unwrap();
        let a = e.a().unwrap();
        for p in 0..100 {
            assert!(a.path(p).windows(2).all(|w| w[1] >= w[0]));
            assert!(*a.path(p).last().unwrap() >= 0.0);
        }
    }

    #[test]
    fn oscillatory_sup_distance() {
        let e = ens(4000, 1);
        let base: Arc<dyn IncreasingProcess> = Arc::new(LinearA { rate: 1.0 });
        let a4 = realize_field(&OscillatoryA { base: base.clone(), n: 4.0 }, &e).unwrap();
        let a = realize_field(base.as_ref(), &e).unwrap();
        let sup = a4
            .path(0)
            .iter()
            .zip(a.path(0))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!((sup - 1.0 / (16.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn decreasing_spec_rejected() {
        let e = ens(10, 2);
        let err = realize_field(&LinearA { rate: -1.0 }, &e).unwrap_err();
        assert!(matches!(err, Error::Monotonicity { path: 0, node: 1, .. }));
    }

    #[test]
    fn omega_examples() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let lin: Vec<f64> = g.points().to_vec();
        assert!((omega_delta(&lin, &g, 0.3).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(omega_delta(&[0.0; 11], &g, 0.3).unwrap(), 0.0);
        let sq: Vec<f64> = g.points().iter().map(|t| t * t).collect();
        assert!((omega_delta(&sq, &g, 0.3).unwrap() - 0.51).abs() < 1e-12);
        assert!(omega_delta(&sq, &g, 1.5).is_err());
    }
}
