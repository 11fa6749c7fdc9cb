use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::path_calculus::{same_grid, TimeGrid};

/// One process sampled on every node of every path, path-major:
/// entry `(p, i, c)` lives at `(p * nodes + i) * dim + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathField {
    grid: Arc<TimeGrid>,
    n_paths: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PathField {
    pub fn zeros(grid: Arc<TimeGrid>, n_paths: usize, dim: usize) -> Self {
        let data = vec![0.0; n_paths * grid.len() * dim];
        Self {
            grid,
            n_paths,
            dim,
            data,
        }
    }

    pub fn from_data(grid: Arc<TimeGrid>, n_paths: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_paths * grid.len() * dim {
            return Err(Error::GridAlignment(format!(
                "field needs {} values, got {}",
                n_paths * grid.len() * dim,
                data.len()
            )));
        }
        Ok(Self {
            grid,
            n_paths,
            dim,
            data,
        })
    }

    /// Fills every path in parallel; `f(path, out)` writes one path.
    pub fn from_paths(
        grid: Arc<TimeGrid>,
        n_paths: usize,
        dim: usize,
        f: impl Fn(usize, &mut [f64]) + Sync,
    ) -> Self {
        let mut field = Self::zeros(grid, n_paths, dim);
        let stride = field.stride();
        if stride > 0 {
            field
                .data
                .par_chunks_mut(stride)
                .enumerate()
                .for_each(|(p, out)| f(p, out));
        }
        field
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    /// Values per path.
    pub fn stride(&self) -> usize {
        self.grid.len() * self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn path(&self, p: usize) -> &[f64] {
        let s = self.stride();
        &self.data[p * s..(p + 1) * s]
    }

    pub fn path_mut(&mut self, p: usize) -> &mut [f64] {
        let s = self.stride();
        &mut self.data[p * s..(p + 1) * s]
    }

    pub fn at(&self, p: usize, i: usize) -> &[f64] {
        let o = (p * self.grid.len() + i) * self.dim;
        &self.data[o..o + self.dim]
    }

    pub fn at_mut(&mut self, p: usize, i: usize) -> &mut [f64] {
        let o = (p * self.grid.len() + i) * self.dim;
        &mut self.data[o..o + self.dim]
    }

    /// Component `c` at node `i` across all paths.
    pub fn column(&self, i: usize, c: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.at(p, i)[c]).collect()
    }

    /// Path average of component `c` at node `i`, summed in path order.
    pub fn mean_at(&self, i: usize, c: usize) -> f64 {
        let mut s = 0.0;
        for p in 0..self.n_paths {
            s += self.at(p, i)[c];
        }
        s / self.n_paths as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> PathField {
        Self {
            grid: self.grid.clone(),
            n_paths: self.n_paths,
            dim: self.dim,
            data: self.data.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sub(&self, other: &PathField) -> Result<PathField> {
        self.check_compatible(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            n_paths: self.n_paths,
            dim: self.dim,
            data: self
                .data
                .par_iter()
                .zip(other.data.par_iter())
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn check_compatible(&self, other: &PathField) -> Result<()> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridAlignment("fields live on different grids".into()));
        }
        if self.n_paths != other.n_paths || self.dim != other.dim {
            return Err(Error::GridAlignment(format!(
                "field shape mismatch: {}x{} vs {}x{}",
                self.n_paths, self.dim, other.n_paths, other.dim
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Simulated driving noise plus any derived processes, keyed by name
/// (`"W"`, `"A"`, ...). Immutable once handed to a solver.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    grid: Arc<TimeGrid>,
    seed: u64,
    n_paths: usize,
    processes: BTreeMap<String, PathField>,
    stochastic_a: bool,
}

pub const BROWNIAN: &str = "W";
pub const INCREASING: &str = "A";

impl PathEnsemble {
    pub fn new(grid: Arc<TimeGrid>, n_paths: usize, seed: u64) -> Self {
        Self {
            grid,
            seed,
            n_paths,
            processes: BTreeMap::new(),
            stochastic_a: false,
        }
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn insert(&mut self, name: &str, field: PathField) -> Result<()> {
        if !same_grid(&self.grid, field.grid()) || field.n_paths() != self.n_paths {
            return Err(Error::GridAlignment(format!(
                "process `{name}` does not match the ensemble grid or path count"
            )));
        }
        self.processes.insert(name.to_string(), field);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&PathField> {
        self.processes.get(name).ok_or_else(|| Error::UnknownName {
            kind: "process",
            name: name.to_string(),
            known: self.processes.keys().cloned().collect::<Vec<_>>().join(", "),
        })
    }

    pub fn processes(&self) -> impl Iterator<Item = (&String, &PathField)> {
        self.processes.iter()
    }

    pub fn w(&self) -> Result<&PathField> {
        self.get(BROWNIAN)
    }

    pub fn a(&self) -> Result<&PathField> {
        self.get(INCREASING)
    }

    /// Brownian dimension.
    pub fn d(&self) -> Result<usize> {
        Ok(self.w()?.dim())
    }

    /// Whether `A` varies across paths.
    pub fn a_is_stochastic(&self) -> bool {
        self.stochastic_a
    }

    pub(crate) fn set_a_stochastic(&mut self, v: bool) {
        self.stochastic_a = v;
    }
}

/// Standard Brownian motion with `d` independent components.
///
/// Path `p` draws from ChaCha8 seeded with `seed` on stream `p`, so a path's
/// increments do not depend on `n_paths` or on the thread schedule.
pub fn simulate_brownian(grid: Arc<TimeGrid>, n_paths: usize, d: usize, seed: u64) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be at least 1".into()));
    }
    if d == 0 {
        return Err(Error::Domain("Brownian dimension must be at least 1".into()));
    }
    let sqrt_dt: Vec<f64> = (0..grid.n_steps()).map(|i| grid.dt(i).sqrt()).collect();
    let w = PathField::from_paths(grid.clone(), n_paths, d, |p, out| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        for (i, s) in sqrt_dt.iter().enumerate() {
            for c in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                out[(i + 1) * d + c] = out[i * d + c] + s * z;
            }
        }
    });
    let mut ens = PathEnsemble::new(grid, n_paths, seed);
    ens.insert(BROWNIAN, w)?;
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_zero_and_reproducible() {
        let g = TimeGrid::uniform(1.0, 16).unwrap().into_shared();
        let a = simulate_brownian(g.clone(), 50, 2, 7).unwrap();
        let b = simulate_brownian(g.clone(), 80, 2, 7).unwrap();
        let wa = a.w().unwrap();
        let wb = b.w().unwrap();
        for p in 0..50 {
            assert_eq!(wa.at(p, 0), &[0.0, 0.0]);
            assert_eq!(wa.path(p), wb.path(p), "path {p} depends on n_paths");
        }
        let c = simulate_brownian(g, 50, 2, 8).unwrap();
        assert_ne!(c.w().unwrap().path(0), wa.path(0));
    }

    #[test]
    fn rejects_empty() {
        let g = TimeGrid::uniform(1.0, 4).unwrap().into_shared();
        assert!(simulate_brownian(g, 0, 1, 0).is_err());
    }
}
