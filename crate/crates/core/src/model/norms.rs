use serde::Serialize;

use crate::error::{Error, Result};
use crate::stochastic_engine::{block_sum, PathField};

/// Monte Carlo estimates of the three pieces of a weighted solution norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormReport {
    /// `E sup_t w(t) |Y(t)|^p`.
    pub sup_term: f64,
    /// `E (int w |Y|^2 dA)^{p/2}`.
    pub da_term: f64,
    /// `E (int w |Z|^2 dt)^{p/2}`.
    pub dt_term: f64,
    pub p: f64,
    pub beta: f64,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
}

impl NormReport {
    /// `sup_term + a da_term + b dt_term`.
    pub fn total(&self) -> f64 {
        self.sup_term + self.a * self.da_term + self.b * self.dt_term
    }

    /// `total^{1/p}`, homogeneous of degree one in `(Y, Z)`.
    pub fn norm(&self) -> f64 {
        self.total().powf(1.0 / self.p)
    }
}

/// `||(Y, Z)||_{p, beta}` pieces with weight `e^{beta A}`.
pub fn weighted_norm(y: &PathField, z: &PathField, a: &PathField, p: f64, beta: f64) -> Result<NormReport> {
    if !(p >= 2.0) {
        return Err(Error::Domain(format!("p must be >= 2, got {p}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::Domain(format!("beta must be >= 0, got {beta}")));
    }
    let (s, da, dt) = terms(y, z, a, 0.0, beta, p)?;
    Ok(NormReport {
        sup_term: s,
        da_term: da,
        dt_term: dt,
        p,
        beta,
        alpha: 0.0,
        a: 1.0,
        b: 1.0,
    })
}

/// `E sup e^{alpha t + beta A} |dY|^2 + a E int e^{..} |dY|^2 dA + b E int e^{..} |dZ|^2 dt`.
pub fn equivalent_norm(
    dy: &PathField,
    dz: &PathField,
    a_field: &PathField,
    alpha: f64,
    beta: f64,
    a: f64,
    b: f64,
) -> Result<NormReport> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::Domain(format!("need a, b > 0, got a = {a}, b = {b}")));
    }
    let (s, da, dt) = terms(dy, dz, a_field, alpha, beta, 2.0)?;
    Ok(NormReport {
        sup_term: s,
        da_term: da,
        dt_term: dt,
        p: 2.0,
        beta,
        alpha,
        a,
        b,
    })
}

fn terms(y: &PathField, z: &PathField, a: &PathField, alpha: f64, beta: f64, p: f64) -> Result<(f64, f64, f64)> {
    if y.n_paths() != z.n_paths() || y.n_paths() != a.n_paths() || a.dim() != 1 {
        return Err(Error::GridAlignment("norm inputs have mismatched shapes".into()));
    }
    if !crate::path_calculus::same_grid(y.grid(), z.grid()) || !crate::path_calculus::same_grid(y.grid(), a.grid()) {
        return Err(Error::GridAlignment("norm inputs live on different grids".into()));
    }
    let grid = y.grid();
    let n = grid.len();
    let (my, mz) = (y.dim(), z.dim());
    let half = p / 2.0;
    let sums = block_sum(y.n_paths(), 3, |path, acc| {
        let yp = y.path(path);
        let zp = z.path(path);
        let ap = a.path(path);
        let mut sup: f64 = 0.0;
        let mut ia = 0.0;
        let mut it = 0.0;
        for i in 0..n {
            let wgt = (alpha * grid.t(i) + beta * ap[i]).exp();
            let y2: f64 = yp[i * my..(i + 1) * my].iter().map(|v| v * v).sum();
            sup = sup.max(wgt * y2.powf(half));
            if i + 1 < n {
                let z2: f64 = zp[i * mz..(i + 1) * mz].iter().map(|v| v * v).sum();
                ia += wgt * y2 * (ap[i + 1] - ap[i]);
                it += wgt * z2 * grid.dt(i);
            }
        }
        acc[0] += sup;
        acc[1] += ia.powf(half);
        acc[2] += it.powf(half);
    });
    let np = y.n_paths() as f64;
    let out = (sums[0] / np, sums[1] / np, sums[2] / np);
    if !out.0.is_finite() || !out.1.is_finite() || !out.2.is_finite() {
        return Err(Error::NumericOverflow(format!(
            "weighted norm (alpha = {alpha}, beta = {beta})"
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_calculus::TimeGrid;

    fn fields(n: usize, y: f64, z: f64) -> (PathField, PathField, PathField) {
        let g = TimeGrid::uniform(1.0, n).unwrap().into_shared();
        let pts = g.points().to_vec();
        let yf = PathField::from_paths(g.clone(), 3, 1, |_, o| o.fill(y));
        let zf = PathField::from_paths(g.clone(), 3, 1, |_, o| o.fill(z));
        let af = PathField::from_paths(g, 3, 1, |_, o| o.copy_from_slice(&pts));
        (yf, zf, af)
    }

    #[test]
    fn zero_fields() {
        let (y, z, a) = fields(10, 0.0, 0.0);
        let r = weighted_norm(&y, &z, &a, 2.0, 1.0).unwrap();
        assert_eq!((r.sup_term, r.da_term, r.dt_term), (0.0, 0.0, 0.0));
        assert_eq!(equivalent_norm(&y, &z, &a, 1.0, 1.0, 2.0, 3.0).unwrap().total(), 0.0);
    }

    #[test]
    fn unit_y_no_weight() {
        let (y, z, a) = fields(10, 1.0, 0.0);
        let r = weighted_norm(&y, &z, &a, 2.0, 0.0).unwrap();
        assert_eq!(r.sup_term, 1.0);
        assert!((r.da_term - 1.0).abs() < 1e-14);
        assert_eq!(r.dt_term, 0.0);
    }

    #[test]
    fn exponential_weight_converges() {
        let (y, z, a) = fields(100_000, 1.0, 0.0);
        let r = weighted_norm(&y, &z, &a, 2.0, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((r.da_term - (e - 1.0)).abs() < 1e-4);
        let q = equivalent_norm(&y, &z, &a, 0.0, 1.0, 2.0, 1.0).unwrap();
        assert!((q.total() - (e + 2.0 * (e - 1.0))).abs() < 1e-4);
        assert!((q.total() - 6.1548).abs() < 1e-3);
    }

    #[test]
    fn overflow_is_reported() {
        let (y, z, a) = fields(10, 1.0, 1.0);
        assert!(matches!(
            weighted_norm(&y, &z, &a, 2.0, 1e4),
            Err(Error::NumericOverflow(_))
        ));
        assert!(weighted_norm(&y, &z, &a, 1.5, 0.0).is_err());
    }
}
