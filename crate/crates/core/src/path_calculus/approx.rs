use super::function::{dist, GridFunction};
use super::grid::TimeGrid;
use crate::error::{Error, Result};

/// Right-endpoint step function `x^N = 1_{0} x(0) + sum 1_{(t_{j-1}, t_j]} x(t_j)`,
/// sampled back on the grid of `x`.
pub fn step_approximation(x: &GridFunction, partition: &TimeGrid) -> Result<GridFunction> {
    let idx = partition_nodes(x, partition)?;
    let dim = x.dim();
    let n = x.grid().len();
    let mut values = Vec::with_capacity(n * dim);
    values.extend_from_slice(x.at(0));
    let mut j = 1;
    for s in 1..n {
        while idx[j] < s {
            j += 1;
        }
        values.extend_from_slice(x.at(idx[j]));
    }
    GridFunction::new(x.grid().clone(), dim, values)
}

/// `sup |x^N - x|` where each piece is compared over its closure
/// `[t_{j-1}, t_j]`, i.e. the distance to the continuous interpolant of `x`.
pub fn step_approximation_error(x: &GridFunction, partition: &TimeGrid) -> Result<f64> {
    let idx = partition_nodes(x, partition)?;
    let mut sup: f64 = 0.0;
    for w in idx.windows(2) {
        let right = x.at(w[1]);
        for s in w[0]..w[1] {
            sup = sup.max(dist(right, x.at(s)));
        }
    }
    Ok(sup)
}

/// `sup { |x(t) - x(s)| : |t - s| <= h }` over grid nodes.
pub fn modulus_of_continuity(x: &GridFunction, h: f64) -> f64 {
    let grid = x.grid();
    let tol = grid.tolerance();
    let n = grid.len();
    let mut sup: f64 = 0.0;
    for i in 0..n {
        let mut j = i + 1;
        while j < n && grid.t(j) - grid.t(i) <= h + tol {
            sup = sup.max(dist(x.at(i), x.at(j)));
            j += 1;
        }
    }
    sup
}

fn partition_nodes(x: &GridFunction, partition: &TimeGrid) -> Result<Vec<usize>> {
    let grid = x.grid();
    if (partition.horizon() - grid.horizon()).abs() > grid.tolerance() {
        return Err(Error::GridAlignment(format!(
            "partition ends at {}, grid at {}",
            partition.horizon(),
            grid.horizon()
        )));
    }
    partition
        .points()
        .iter()
        .map(|&t| {
            grid.index_of(t).map_err(|_| {
                Error::GridAlignment(format!("partition node {t} is not a node of the grid"))
            })
        })
        .collect()
}
