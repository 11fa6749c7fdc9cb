use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Paths per block when accumulating cross products; blocks are summed in
/// index order so the result does not depend on the thread schedule.
const BLOCK: usize = 256;

/// Least-squares basis for conditional expectations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    /// Total polynomial degree in the standardized state variables.
    pub degree: usize,
    /// Added to the diagonal of the normalized Gram matrix.
    pub ridge: f64,
    /// Add `rho`-weighted window averages of the previous iterate.
    pub segment_features: bool,
    /// Fit on the first `k` paths only and evaluate on all of them.
    pub training_paths: Option<usize>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            degree: 2,
            ridge: 1e-10,
            segment_features: false,
            training_paths: None,
        }
    }
}

impl BasisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::Domain(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        if self.degree > 8 {
            return Err(Error::Domain(format!("basis degree {} is above 8", self.degree)));
        }
        if self.training_paths == Some(0) {
            return Err(Error::Domain("training_paths must be positive".into()));
        }
        Ok(())
    }
}

/// A fitted design: standardized polynomial features plus a factorized
/// Gram matrix, reusable across several targets.
#[derive(Debug)]
pub struct Projection {
    n_paths: usize,
    n_train: usize,
    n_cols: usize,
    design: Vec<f64>,
    solver: Solver,
}

#[derive(Debug)]
enum Solver {
    Cholesky(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Svd(nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Projection {
    /// `raw` holds `n_raw` state variables per path, path-major.
    pub fn fit(raw: &[f64], n_raw: usize, n_paths: usize, basis: &BasisConfig) -> Result<Self> {
        basis.validate()?;
        if raw.len() != n_raw * n_paths {
            return Err(Error::Domain(format!(
                "feature array has {} entries, expected {}",
                raw.len(),
                n_raw * n_paths
            )));
        }
        if let Some(v) = raw.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite feature value {v}")));
        }
        let n_train = basis.training_paths.unwrap_or(n_paths).min(n_paths);

        // standardize and drop constant columns
        let mut kept = Vec::new();
        for c in 0..n_raw {
            let mut s = 0.0;
            for p in 0..n_train {
                s += raw[p * n_raw + c];
            }
            let mean = s / n_train as f64;
            let mut v = 0.0;
            for p in 0..n_train {
                let e = raw[p * n_raw + c] - mean;
                v += e * e;
            }
            let sd = (v / n_train as f64).sqrt();
            if sd > 1e-12 * (1.0 + mean.abs()) {
                kept.push((c, mean, sd));
            }
        }
        let monomials = monomials(kept.len(), basis.degree);
        let n_cols = monomials.len();
        if n_train <= n_cols {
            return Err(Error::Singular(format!(
                "{n_train} training paths for {n_cols} basis functions"
            )));
        }

        let mut design = vec![0.0; n_paths * n_cols];
        design
            .par_chunks_mut(n_cols)
            .enumerate()
            .for_each(|(p, row)| {
                let z: Vec<f64> = kept
                    .iter()
                    .map(|&(c, m, s)| (raw[p * n_raw + c] - m) / s)
                    .collect();
                for (out, mono) in row.iter_mut().zip(&monomials) {
                    *out = mono.iter().map(|&(v, e)| z[v].powi(e as i32)).product();
                }
            });

        let gram = block_sum(n_train, n_cols * n_cols, |p, acc| {
            let row = &design[p * n_cols..(p + 1) * n_cols];
            for a in 0..n_cols {
                for b in a..n_cols {
                    acc[a * n_cols + b] += row[a] * row[b];
                }
            }
        });
        let mut g = DMatrix::<f64>::zeros(n_cols, n_cols);
        for a in 0..n_cols {
            for b in a..n_cols {
                let v = gram[a * n_cols + b] / n_train as f64;
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }

        let solver = if basis.ridge > 0.0 {
            for a in 0..n_cols {
                g[(a, a)] += basis.ridge;
            }
            match g.clone().cholesky() {
                Some(ch) => Solver::Cholesky(ch),
                None => return Err(Error::Singular("ridge-regularized Gram matrix is not positive definite".into())),
            }
        } else {
            let svd = g.svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if !(smin > 1e-12 * smax) {
                return Err(Error::Singular(format!(
                    "design is rank deficient (singular values {smin:.3e} .. {smax:.3e}) and ridge = 0"
                )));
            }
            Solver::Svd(svd)
        };

        Ok(Self {
            n_paths,
            n_train,
            n_cols,
            design,
            solver,
        })
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Coefficients for one target column (length `n_paths`).
    pub fn coefficients(&self, target: &[f64]) -> Result<DVector<f64>> {
        let n_cols = self.n_cols;
        let rhs = block_sum(self.n_train, n_cols, |p, acc| {
            let row = &self.design[p * n_cols..(p + 1) * n_cols];
            for (a, r) in acc.iter_mut().zip(row) {
                *a += r * target[p];
            }
        });
        let rhs = DVector::from_iterator(n_cols, rhs.into_iter().map(|v| v / self.n_train as f64));
        match &self.solver {
            Solver::Cholesky(ch) => Ok(ch.solve(&rhs)),
            Solver::Svd(svd) => svd
                .solve(&rhs, 0.0)
                .map_err(|e| Error::Singular(e.to_string())),
        }
    }

    /// Fitted values for `n_targets` targets stored path-major.
    pub fn project(&self, targets: &[f64], n_targets: usize) -> Result<Vec<f64>> {
        if targets.len() != self.n_paths * n_targets {
            return Err(Error::Domain(format!(
                "target array has {} entries, expected {}",
                targets.len(),
                self.n_paths * n_targets
            )));
        }
        let mut out = vec![0.0; targets.len()];
        for k in 0..n_targets {
            let col: Vec<f64> = (0..self.n_paths).map(|p| targets[p * n_targets + k]).collect();
            let first = col[0];
            if col[..self.n_train].iter().all(|&v| v == first) {
                // projections reproduce constants exactly
                for p in 0..self.n_paths {
                    out[p * n_targets + k] = first;
                }
                continue;
            }
            if let Some(v) = col.iter().find(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("non-finite regression target {v}")));
            }
            let beta = self.coefficients(&col)?;
            let fitted: Vec<f64> = self
                .design
                .par_chunks(self.n_cols)
                .map(|row| row.iter().zip(beta.iter()).map(|(x, b)| x * b).sum())
                .collect();
            for (p, v) in fitted.into_iter().enumerate() {
                out[p * n_targets + k] = v;
            }
        }
        Ok(out)
    }
}

/// Least-squares estimate of `E[target | features]` evaluated per path.
pub fn conditional_expectation(
    raw: &[f64],
    n_raw: usize,
    targets: &[f64],
    n_targets: usize,
    basis: &BasisConfig,
) -> Result<Vec<f64>> {
    let n_paths = targets.len() / n_targets.max(1);
    Projection::fit(raw, n_raw, n_paths, basis)?.project(targets, n_targets)
}

/// Exponent lists `[(variable, power)]` of total degree <= `degree`, graded.
fn monomials(n_vars: usize, degree: usize) -> Vec<Vec<(usize, u32)>> {
    let mut out: Vec<Vec<(usize, u32)>> = vec![Vec::new()];
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..degree {
        let mut next = Vec::new();
        for m in &frontier {
            let start = m.last().copied().unwrap_or(0);
            for v in start..n_vars {
                let mut n = m.clone();
                n.push(v);
                next.push(n);
            }
        }
        for m in &next {
            let mut ex: Vec<(usize, u32)> = Vec::new();
            for &v in m {
                match ex.last_mut() {
                    Some(last) if last.0 == v => last.1 += 1,
                    _ => ex.push((v, 1)),
                }
            }
            out.push(ex);
        }
        frontier = next;
    }
    out
}

/// Deterministic parallel reduction over `n` items into a `width` vector.
pub(crate) fn block_sum(n: usize, width: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Vec<f64> {
    let n_blocks = n.div_ceil(BLOCK);
    let partial: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0.0; width];
            for p in b * BLOCK..((b + 1) * BLOCK).min(n) {
                f(p, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for block in partial {
        for (t, v) in total.iter_mut().zip(block) {
            *t += v;
        }
    }
    total
}
