use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::grid::{same_grid, TimeGrid};
use crate::csv_io::{fmt_f64, parse_f64};
use crate::error::{Error, Result};

/// A (possibly vector-valued) function sampled at every node of a grid.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<TimeGrid>,
    dim: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<TimeGrid>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("grid function dimension must be >= 1".into()));
        }
        if values.len() != grid.len() * dim {
            return Err(Error::GridAlignment(format!(
                "expected {} values ({} nodes x dim {}), got {}",
                grid.len() * dim,
                grid.len(),
                dim,
                values.len()
            )));
        }
        Ok(Self { grid, dim, values })
    }

    pub fn scalar(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, values)
    }

    pub fn from_fn(grid: Arc<TimeGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self {
            grid,
            dim: 1,
            values,
        }
    }

    pub fn from_fn_vec(grid: Arc<TimeGrid>, dim: usize, f: impl Fn(f64, &mut [f64])) -> Self {
        let mut values = vec![0.0; grid.len() * dim];
        for (i, chunk) in values.chunks_mut(dim).enumerate() {
            f(grid.t(i), chunk);
        }
        Self { grid, dim, values }
    }

    pub fn constant(grid: Arc<TimeGrid>, value: f64) -> Self {
        Self::from_fn(grid, |_| value)
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }

    /// First component at `node`.
    pub fn scalar_at(&self, node: usize) -> f64 {
        self.values[node * self.dim]
    }

    pub fn check_compatible(&self, other: &GridFunction) -> Result<()> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridAlignment("functions live on different grids".into()));
        }
        if self.dim != other.dim {
            return Err(Error::GridAlignment(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.check_compatible(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            dim: self.dim,
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        Self {
            grid: self.grid.clone(),
            dim: self.dim,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `sup_t |x(t)|` over the nodes, Euclidean norm per node.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .chunks(self.dim)
            .map(norm)
            .fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .values
            .chunks(self.dim)
            .zip(other.values.chunks(self.dim))
            .map(|(a, b)| dist(a, b))
            .fold(0.0, f64::max))
    }

    /// Writes `t,v_1..v_d`, one row per node, 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|c| format!("v_{c}")));
        w.write_record(&header)?;
        for i in 0..self.grid.len() {
            let mut row = Vec::with_capacity(self.dim + 1);
            row.push(fmt_f64(self.grid.t(i)));
            row.extend(self.at(i).iter().map(|&v| fmt_f64(v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`GridFunction::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let dim = r.headers()?.len().saturating_sub(1);
        if dim == 0 {
            return Err(Error::Config {
                path: "header".into(),
                message: "expected `t,v_1..v_d`".into(),
            });
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, record) in r.records().enumerate() {
            let record = record?;
            let field = |c: usize| -> Result<f64> {
                parse_f64(record.get(c).unwrap_or(""), &format!("row {row}, column {c}"))
            };
            times.push(field(0)?);
            for c in 1..=dim {
                values.push(field(c)?);
            }
        }
        let grid = Arc::new(TimeGrid::from_points(times)?);
        Self::new(grid, dim, values)
    }
}

/// How a BV function is interpolated between grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Continuous, piecewise linear between nodes.
    #[default]
    Linear,
    /// Right-continuous, constant on `[t_i, t_{i+1})`; jumps happen at nodes.
    Step,
}

/// A grid function read as a function of bounded variation.
#[derive(Debug, Clone)]
pub struct BvFunction {
    func: GridFunction,
    mode: Interpolation,
    total_variation: f64,
}

impl BvFunction {
    pub fn new(func: GridFunction, mode: Interpolation) -> Self {
        let total_variation =
            variation_slice(func.values(), func.dim(), 0, func.grid().n_steps());
        Self {
            func,
            mode,
            total_variation,
        }
    }

    pub fn linear(func: GridFunction) -> Self {
        Self::new(func, Interpolation::Linear)
    }

    pub fn step(func: GridFunction) -> Self {
        Self::new(func, Interpolation::Step)
    }

    pub fn function(&self) -> &GridFunction {
        &self.func
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        self.func.grid()
    }

    pub fn mode(&self) -> Interpolation {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.func.dim()
    }

    /// Cached `V_0^T`.
    pub fn variation(&self) -> f64 {
        self.total_variation
    }

    pub fn sub(&self, other: &BvFunction) -> Result<BvFunction> {
        let mode = if self.mode == Interpolation::Step || other.mode == Interpolation::Step {
            Interpolation::Step
        } else {
            Interpolation::Linear
        };
        Ok(Self::new(self.func.sub(&other.func)?, mode))
    }
}

/// Partition sum `sum |eta(t_i) - eta(t_{i-1})|` over nodes `from..=to`.
pub fn variation_slice(values: &[f64], dim: usize, from: usize, to: usize) -> f64 {
    let mut acc = 0.0;
    for i in from..to {
        let a = &values[i * dim..(i + 1) * dim];
        let b = &values[(i + 1) * dim..(i + 2) * dim];
        acc += dist(a, b);
    }
    acc
}

/// Total variation of `eta` on `[s, t]`; both ends must be grid nodes.
pub fn total_variation(eta: &BvFunction, s: f64, t: f64) -> Result<f64> {
    let grid = eta.grid();
    let i = grid.index_of(s)?;
    let j = grid.index_of(t)?;
    if i > j {
        return Err(Error::Domain(format!("need s <= t, got s = {s}, t = {t}")));
    }
    if i == 0 && j == grid.n_steps() {
        return Ok(eta.variation());
    }
    Ok(variation_slice(eta.function().values(), eta.dim(), i, j))
}

/// `|eta(0)| + V_0^T(eta)`.
pub fn bv_norm(eta: &BvFunction) -> f64 {
    norm(eta.function().at(0)) + eta.variation()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    if v.len() == 1 {
        v[0].abs()
    } else {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        (a[0] - b[0]).abs()
    } else {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(1.0, n).unwrap())
    }

    #[test]
    fn variation_of_identity_and_constant() {
        let g = grid(10);
        let id = BvFunction::linear(GridFunction::from_fn(g.clone(), |t| t));
        assert!((total_variation(&id, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((bv_norm(&id) - 1.0).abs() < 1e-15);
        let five = BvFunction::linear(GridFunction::constant(g, 5.0));
        assert_eq!(total_variation(&five, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(bv_norm(&five), 5.0);
    }

    /// Independent oracle: split the sine into its monotone pieces and add
    /// the absolute increments on each piece.
    fn sine_variation_oracle(turning: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        turning.windows(2).map(|w| (f(w[1]) - f(w[0])).abs()).sum()
    }

    #[test]
    fn variation_of_sine_converges_to_four() {
        let f = |t: f64| (2.0 * PI * t).sin();
        let exact = sine_variation_oracle(&[0.0, 0.25, 0.75, 1.0], f);
        assert!((exact - 4.0).abs() < 1e-12);
        let mut last_err = f64::INFINITY;
        for n in [10usize, 100, 1000, 10_000] {
            let eta = BvFunction::linear(GridFunction::from_fn(grid(n), f));
            let v = total_variation(&eta, 0.0, 1.0).unwrap();
            let err = (v - exact).abs();
            assert!(v <= exact + 1e-12, "partition sums are lower bounds");
            assert!(err <= last_err + 1e-12);
            last_err = err;
        }
        // 4 | 4 divides n, so the turning points are nodes and the sum is exact
        assert!(last_err < 1e-9);
        let eta = BvFunction::linear(GridFunction::from_fn(grid(1000), f));
        assert!((bv_norm(&eta) - 4.0).abs() < 1e-9);
    }

    #[test]
    fn variation_off_grid_is_error() {
        let eta = BvFunction::linear(GridFunction::from_fn(grid(10), |t| t));
        assert!(matches!(
            total_variation(&eta, 0.05, 1.0),
            Err(Error::GridAlignment(_))
        ));
        assert!(total_variation(&eta, 0.5, 0.2).is_err());
    }

    #[test]
    fn vector_variation_uses_euclidean_norm() {
        let g = grid(4);
        let f = GridFunction::from_fn_vec(g, 2, |t, out| {
            out[0] = 3.0 * t;
            out[1] = 4.0 * t;
        });
        let eta = BvFunction::linear(f);
        assert!((eta.variation() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let f = GridFunction::from_fn(grid(7), |t| (t * 1.234567).exp() / 3.0);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,v_1\n"));
        let back = GridFunction::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.values(), f.values());
        assert_eq!(back.grid().points(), f.grid().points());
    }
}
