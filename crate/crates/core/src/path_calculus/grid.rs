use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when matching times against grid nodes.
pub const NODE_TOLERANCE: f64 = 1e-9;

/// Ordered time nodes `0 = t_0 < t_1 < ... < t_M = T`, optionally carrying a
/// delay `delta` that spans a fixed number of steps.
///
/// A delay is only accepted when it is a constant index lag: `t_k = delta`
/// for some node `k`, and `t_i - delta = t_{i-k}` for every `i >= k`.
/// Uniform grids with `delta / h` integral always qualify.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    delay: Option<DelaySpan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySpan {
    pub delta: f64,
    pub steps: usize,
}

/// Compact description of a grid for manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub horizon: f64,
    pub n_steps: usize,
    pub uniform: bool,
    pub delay: Option<DelaySpan>,
}

impl TimeGrid {
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::GridAlignment(
                "a grid needs at least two nodes".into(),
            ));
        }
        if points[0] != 0.0 {
            return Err(Error::GridAlignment(format!(
                "grid must start at 0, got {}",
                points[0]
            )));
        }
        if let Some(w) = points.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::GridAlignment(format!(
                "grid is not strictly increasing near {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            points,
            delay: None,
        })
    }

    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        let h = horizon / n_steps as f64;
        let mut points: Vec<f64> = (0..=n_steps).map(|i| i as f64 * h).collect();
        points[n_steps] = horizon;
        Self::from_points(points)
    }

    pub fn uniform_with_delay(horizon: f64, n_steps: usize, delta: f64) -> Result<Self> {
        Self::uniform(horizon, n_steps)?.with_delay(delta)
    }

    /// Attaches a delay, verifying that it is a constant index lag.
    pub fn with_delay(mut self, delta: f64) -> Result<Self> {
        let horizon = self.horizon();
        if !(delta > 0.0) || delta > horizon * (1.0 + NODE_TOLERANCE) {
            return Err(Error::Domain(format!(
                "delay must lie in (0, T] = (0, {horizon}], got {delta}"
            )));
        }
        let steps = self.index_of(delta).map_err(|_| {
            let hint = if self.is_uniform() {
                match suggest_n_steps(horizon, delta, self.n_steps()) {
                    Some(n) => format!("; nearest aligned n_steps is {n}"),
                    None => String::new(),
                }
            } else {
                String::new()
            };
            Error::GridAlignment(format!(
                "delay {delta} is not a grid node (T = {horizon}, n_steps = {}){hint}",
                self.n_steps()
            ))
        })?;
        let tol = self.tolerance();
        for i in steps..self.points.len() {
            if (self.points[i] - delta - self.points[i - steps]).abs() > tol {
                return Err(Error::GridAlignment(format!(
                    "delay {delta} is not a constant lag of {steps} steps at node {i}"
                )));
            }
        }
        self.delay = Some(DelaySpan { delta, steps });
        Ok(self)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.points.last().expect("grid has nodes")
    }

    pub fn t(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// Length of step `i`, i.e. `t_{i+1} - t_i`.
    pub fn dt(&self, i: usize) -> f64 {
        self.points[i + 1] - self.points[i]
    }

    pub fn mesh(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn delay(&self) -> Option<DelaySpan> {
        self.delay
    }

    pub fn delay_steps(&self) -> Option<usize> {
        self.delay.map(|d| d.steps)
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.horizon() / self.n_steps() as f64;
        let tol = self.tolerance();
        self.points
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= tol)
    }

    pub fn tolerance(&self) -> f64 {
        NODE_TOLERANCE * self.horizon().max(1.0)
    }

    /// Index of the node matching `t`, or a grid-alignment error.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = self.tolerance();
        let pos = self.points.partition_point(|&p| p < t - tol);
        if pos < self.points.len() && (self.points[pos] - t).abs() <= tol {
            Ok(pos)
        } else {
            Err(Error::GridAlignment(format!("time {t} is not a grid node")))
        }
    }

    /// True when every node of `self` is also a node of `other`.
    pub fn is_subset_of(&self, other: &TimeGrid) -> bool {
        self.points.iter().all(|&t| other.index_of(t).is_ok())
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary {
            horizon: self.horizon(),
            n_steps: self.n_steps(),
            uniform: self.is_uniform(),
            delay: self.delay,
        }
    }

    pub fn into_shared(self) -> Arc<TimeGrid> {
        Arc::new(self)
    }
}

/// Nearest `n_steps` (searching outward from `n_steps`) for which the uniform
/// grid on `[0, horizon]` has `delta` as a node.
pub fn suggest_n_steps(horizon: f64, delta: f64, n_steps: usize) -> Option<usize> {
    let aligned = |n: usize| {
        let k = delta * n as f64 / horizon;
        n > 0 && k >= 1.0 - NODE_TOLERANCE && (k - k.round()).abs() <= NODE_TOLERANCE * k.max(1.0)
    };
    let limit = (n_steps.max(1) * 10).max(1000);
    for off in 0..=limit {
        if aligned(n_steps + off) {
            // prefer the smaller candidate when equidistant
            if off > 0 && n_steps >= off && aligned(n_steps - off) {
                return Some(n_steps - off);
            }
            return Some(n_steps + off);
        }
        if n_steps > off && aligned(n_steps - off) {
            return Some(n_steps - off);
        }
    }
    None
}

/// Shared grids compare by pointer first, then by value.
pub fn same_grid(a: &Arc<TimeGrid>, b: &Arc<TimeGrid>) -> bool {
    Arc::ptr_eq(a, b) || a.as_ref() == b.as_ref()
}
